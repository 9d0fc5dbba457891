use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use tessera_bench::{bench_overhead, bench_query_scaling, BenchReport, OverheadConfig, ScalingConfig};
use tessera_cli::service::{self, QueryRequest};
use tessera_cli::{exit_code, parse_counts, EXIT_VALIDATION};
use tessera_core::raster::{read_scene_dir, write_scene_dir};
use tessera_core::synth::{SceneLayout, SceneSpec};
use tessera_core::{EngineConfig, Error, IndexParams, InfoKind, Result, System, TileStore};

#[derive(Parser)]
#[command(name = "tessera", version, about = "Replicated raster tile store with racing spatial indexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest one scene directory, or every scene directory inside it.
    Ingest {
        scene_dir: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Storage nodes when creating a new store.
        #[arg(long, default_value_t = 3)]
        nodes: u32,
    },
    /// Run one query and write the heatmap as PGM.
    Query(QueryArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Cross-check every race against the catalog.
        #[arg(long)]
        verify: bool,
    },
    /// Mark a storage node failed or restored.
    Node {
        #[arg(value_parser = ["fail", "restore"])]
        action: String,
        id: u32,
        #[arg(long)]
        store: PathBuf,
    },
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Write seeded synthetic scenes as scene directories.
    GenScenes {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        bands: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Footprints per side of the square layout.
        #[arg(long, default_value_t = 30)]
        side: usize,
        #[arg(long, default_value_t = 0.0)]
        no_data_rate: f64,
        #[arg(long, default_value = "scenes")]
        out: PathBuf,
    },
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct QueryArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    min_lon: f64,
    #[arg(long)]
    max_lon: f64,
    #[arg(long)]
    min_lat: f64,
    #[arg(long)]
    max_lat: f64,
    /// Window start, epoch seconds.
    #[arg(long)]
    start: i64,
    /// Window end, epoch seconds.
    #[arg(long)]
    end: i64,
    #[arg(long)]
    satellite: Option<String>,
    #[arg(long, default_value = "ndvi")]
    info: InfoKind,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    verify: bool,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Elapsed time against query count for each index method.
    Scaling {
        /// `a..b` (step a), `a..b:step` or a comma list.
        #[arg(long, default_value = "100..1000")]
        counts: String,
        #[arg(long, default_value_t = 50)]
        repeat: usize,
        #[arg(long, default_value_t = 9000)]
        tiles: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Index sizes and build times.
    Overhead {
        #[arg(long, default_value_t = 9000)]
        tiles: usize,
        #[arg(long, default_value_t = 50)]
        repeat: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn scene_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("scene.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.join("scene.json").is_file() {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no scene directories under {}", dir.display())));
    }
    out.sort();
    Ok(out)
}

fn ingest(dir: &Path, root: &Path, nodes: u32) -> Result<()> {
    let dirs = scene_dirs(dir)?;
    let store = TileStore::open_or_create(root, nodes, IndexParams::default())?;
    for d in &dirs {
        let id = store.ingest(&read_scene_dir(d)?)?;
        println!("{id} {}", d.display());
    }
    eprintln!("ingested {} scenes, catalog holds {}", dirs.len(), store.catalog().len());
    Ok(())
}

fn config(verify: bool) -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.race.verify = verify;
    cfg
}

fn query(a: &QueryArgs) -> Result<()> {
    let req = QueryRequest {
        min_lon: a.min_lon,
        max_lon: a.max_lon,
        min_lat: a.min_lat,
        max_lat: a.max_lat,
        start_time: a.start,
        end_time: a.end,
        satellite: a.satellite.clone(),
        info: a.info,
    };
    // validate before paying for index construction
    let q = req.to_query()?;
    let sys = System::open(&a.store, config(a.verify))?;
    let r = sys.execute_query(&q)?;
    if let Some(out) = &a.out {
        std::fs::write(out, tessera_core::render_heatmap(&r.mosaic, q.info))?;
    }
    let summary = serde_json::json!({
        "tile_count": r.tile_count,
        "winner": r.race.winner,
        "timings": r.timings,
        "rows": r.mosaic.rows,
        "cols": r.mosaic.cols,
        "data_pixels": r.mosaic.data_pixels(),
        "tiles": r.tiles,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn serve(root: &Path, host: IpAddr, port: u16, verify: bool) -> Result<()> {
    let sys = Arc::new(System::open(root, config(verify))?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(sys, SocketAddr::new(host, port)))?;
    Ok(())
}

fn emit(report: &BenchReport, json: Option<&Path>) -> Result<()> {
    println!("{}", report.to_text());
    if let Some(path) = json {
        std::fs::write(path, report.to_json())?;
    }
    Ok(())
}

fn gen_scenes(spec: &SceneSpec, count: usize, out: &Path) -> Result<()> {
    spec.validate()?;
    for k in 0..count {
        write_scene_dir(&spec.scene(k)?, &out.join(format!("scene-{k:05}")))?;
    }
    eprintln!("wrote {count} scenes to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { scene_dir, store, nodes } => ingest(&scene_dir, &store, nodes),
        Command::Query(a) => query(&a),
        Command::Serve {
            store,
            port,
            host,
            verify,
        } => serve(&store, host, port, verify),
        Command::Node { action, id, store } => {
            let store = TileStore::open(store)?;
            if action == "fail" {
                store.fail_node(id)?;
            } else {
                store.restore_node(id)?;
            }
            println!("{}", serde_json::to_string(&store.nodes())?);
            Ok(())
        }
        Command::Bench(BenchCommand::Scaling {
            counts,
            repeat,
            tiles,
            seed,
            json,
        }) => {
            let cfg = ScalingConfig {
                counts: parse_counts(&counts).map_err(Error::InvalidArgument)?,
                repeat,
                tiles,
                seed,
                ..Default::default()
            };
            emit(&bench_query_scaling(&cfg)?, json.as_deref())
        }
        Command::Bench(BenchCommand::Overhead { tiles, repeat, json }) => {
            let cfg = OverheadConfig {
                tiles,
                repeat,
                ..Default::default()
            };
            emit(&bench_overhead(&cfg)?, json.as_deref())
        }
        Command::GenScenes {
            count,
            size,
            bands,
            seed,
            side,
            no_data_rate,
            out,
        } => {
            let spec = SceneSpec {
                layout: SceneLayout {
                    side,
                    ..Default::default()
                },
                size,
                bands,
                seed,
                no_data_rate,
            };
            gen_scenes(&spec, count, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
