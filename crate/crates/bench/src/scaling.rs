//! Elapsed time to answer growing query batches, per method.

use std::collections::BTreeSet;
use std::hint::black_box;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tessera_core::synth::{metadata_records, query_workload, SceneLayout};
use tessera_core::{
    build_all, BoundingBox, IndexKind, IndexParams, IndexRunner, RaceOptions, Result, TileId, TileMetadata, TimeRange,
};

use crate::report::{BenchReport, CountStat, LinearFit, Stat};

pub const MULTI: &str = "multi";
pub const BRUTE_FORCE: &str = "brute_force";
pub const DEFAULT_REPEAT: usize = 50;

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    /// Increasing query counts; each count runs the first `count` queries
    /// of one seeded workload.
    pub counts: Vec<usize>,
    pub repeat: usize,
    pub tiles: usize,
    pub seed: u64,
    pub layout: SceneLayout,
    pub params: IndexParams,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            counts: (1..=10).map(|i| i * 100).collect(),
            repeat: DEFAULT_REPEAT,
            tiles: 9000,
            seed: 42,
            layout: SceneLayout::default(),
            params: IndexParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Multi,
    Single(IndexKind),
    BruteForce,
}

impl Method {
    const ALL: [Method; 5] = [
        Method::Multi,
        Method::Single(IndexKind::GeoHash),
        Method::Single(IndexKind::QuadTree),
        Method::Single(IndexKind::OrthoList),
        Method::BruteForce,
    ];

    fn name(self) -> &'static str {
        match self {
            Method::Multi => MULTI,
            Method::Single(k) => k.as_str(),
            Method::BruteForce => BRUTE_FORCE,
        }
    }
}

/// The baseline: every catalog row checked against every query.
pub fn brute_force(rows: &[TileMetadata], b: &BoundingBox, t: &TimeRange) -> BTreeSet<TileId> {
    rows.iter()
        .filter(|m| m.matches(b, t, None))
        .map(|m| m.tile_id.clone())
        .collect()
}

struct Bench<'a> {
    rows: &'a [TileMetadata],
    runner: IndexRunner,
    queries: Vec<(BoundingBox, TimeRange)>,
    opts: RaceOptions,
}

impl Bench<'_> {
    fn run(&self, method: Method, count: usize) -> Result<Duration> {
        let started = Instant::now();
        for (b, t) in &self.queries[..count] {
            match method {
                Method::Multi => {
                    black_box(self.runner.race_query(b, t, self.opts)?);
                }
                Method::Single(k) => {
                    black_box(self.runner.race_among(&[k], b, t, self.opts)?);
                }
                Method::BruteForce => {
                    black_box(brute_force(self.rows, b, t));
                }
            }
        }
        Ok(started.elapsed())
    }
}

/// Synthetic catalog of `cfg.tiles` rows, then [`bench_rows`].
pub fn bench_query_scaling(cfg: &ScalingConfig) -> Result<BenchReport> {
    let rows = metadata_records(&cfg.layout, cfg.tiles, 256, &cfg.params, 3);
    let extent = cfg.layout.extent();
    let span = cfg.layout.time_span(cfg.tiles);
    bench_rows(&rows, &extent, &span, cfg)
}

/// Measures every method over `rows` with a workload drawn inside `extent`
/// and `span`.
pub fn bench_rows(rows: &[TileMetadata], extent: &BoundingBox, span: &TimeRange, cfg: &ScalingConfig) -> Result<BenchReport> {
    let max = cfg.counts.iter().copied().max().unwrap_or(0);
    let entries: Vec<_> = rows.iter().map(TileMetadata::index_entry).collect();
    let multi = build_all(&entries, &cfg.params)?;
    let bench = Bench {
        rows,
        runner: IndexRunner::new(Arc::new(multi)),
        queries: query_workload(extent, span, cfg.layout.tile_deg, max, cfg.seed),
        opts: RaceOptions::default(),
    };

    let mut report = BenchReport::new("scaling", cfg.repeat, cfg.seed, rows.len());
    for (b, t) in &bench.queries {
        if bench.runner.race_query(b, t, bench.opts)?.result != brute_force(rows, b, t) {
            report.mismatches += 1;
        }
    }
    for m in Method::ALL {
        bench.run(m, max)?;
    }

    let mut samples = vec![vec![Vec::with_capacity(cfg.repeat); cfg.counts.len()]; Method::ALL.len()];
    for rep in 0..cfg.repeat {
        for (ci, &count) in cfg.counts.iter().enumerate() {
            // rotate the method order so drift does not favour one method
            for i in 0..Method::ALL.len() {
                let mi = (i + rep + ci) % Method::ALL.len();
                samples[mi][ci].push(bench.run(Method::ALL[mi], count)?);
            }
        }
    }

    for (mi, m) in Method::ALL.iter().enumerate() {
        let series = cfg
            .counts
            .iter()
            .zip(&samples[mi])
            .map(|(&count, s)| CountStat {
                count,
                stat: Stat::from_durations(s),
            })
            .collect();
        report.elapsed.insert(m.name().to_string(), series);
    }
    let points: Vec<(f64, f64)> = report.elapsed[MULTI]
        .iter()
        .map(|p| (p.count as f64, p.stat.mean_ms))
        .collect();
    report.fit = LinearFit::fit(MULTI, &points);
    Ok(report)
}
