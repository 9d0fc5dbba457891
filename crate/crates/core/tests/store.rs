use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tessera_core::store::sha256_hex;
use tessera_core::synth::{query_workload, SceneLayout, SceneSpec};
use tessera_core::{BoundingBox, Error, IndexParams, TileMetadata, TileStore, TimeRange};

fn small_spec(bands: usize) -> SceneSpec {
    SceneSpec {
        size: 2,
        bands,
        ..Default::default()
    }
}

#[test]
fn nine_thousand_scenes_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 4, IndexParams::default()).unwrap();
    let spec = small_spec(1);
    for k in 0..9000 {
        store.ingest(&spec.scene(k).unwrap()).unwrap();
    }
    assert_eq!(store.catalog().len(), 9000);
    let text = fs::read_to_string(dir.path().join("catalog.ndjson")).unwrap();
    assert_eq!(text.lines().count(), 9000);
    // round-robin over 4 nodes spreads tiles evenly
    let mut per_node = [0usize; 4];
    for m in store.catalog().rows() {
        for n in m.replicas {
            per_node[n as usize] += 1;
        }
    }
    assert_eq!(per_node, [6750; 4]);
    drop(store);
    let reopened = TileStore::open(dir.path()).unwrap();
    assert_eq!(reopened.catalog().len(), 9000);
}

#[test]
fn full_scene_writes_ten_bands_three_times() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
    let scene = SceneSpec::default().scene(0).unwrap();
    assert_eq!((scene.rows(), scene.cols(), scene.bands.len()), (256, 256, 10));
    let id = store.ingest(&scene).unwrap();
    let meta = store.metadata(&id).unwrap();
    let mut band_files = 0;
    for entry in walk(dir.path()) {
        if entry.extension().is_some_and(|e| e == "band") {
            band_files += 1;
            assert_eq!(fs::metadata(&entry).unwrap().len(), 14 + 256 * 256 * 4);
        }
    }
    assert_eq!(band_files, 30);
    assert_eq!(store.catalog().len(), 1);
    for band in &meta.bands {
        let fetched = store.fetch_band(&id, band).unwrap();
        assert!(fetched.bit_eq(scene.band(band).unwrap()));
    }
    assert!(matches!(store.ingest(&scene), Err(Error::DuplicateIngest(_))));
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out
}

#[test]
fn replicas_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 5, IndexParams::default()).unwrap();
    let spec = SceneSpec {
        size: 16,
        ..Default::default()
    };
    for k in 0..40 {
        store.ingest(&spec.scene(k).unwrap()).unwrap();
    }
    for meta in store.catalog().rows() {
        let distinct: std::collections::BTreeSet<_> = meta.replicas.iter().collect();
        assert_eq!(distinct.len(), 3);
        for band in &meta.bands {
            let copies: Vec<Vec<u8>> = meta
                .replicas
                .iter()
                .map(|&n| fs::read(store.replica_path(n, &meta, band)).unwrap())
                .collect();
            assert!(copies.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(sha256_hex(&copies[0]), meta.checksums[band]);
        }
        let sidecar: TileMetadata =
            serde_json::from_slice(&fs::read(store.replica_path(meta.replicas[0], &meta, "x").with_file_name("meta.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar, meta);
    }
}

/// Independent filter + sort over every row.
fn linear_scan(rows: &[TileMetadata], b: &BoundingBox, t: &TimeRange, sat: Option<&str>) -> Vec<String> {
    let mut hits: Vec<&TileMetadata> = rows
        .iter()
        .filter(|m| {
            m.bbox.min_lon() <= b.max_lon()
                && b.min_lon() <= m.bbox.max_lon()
                && m.bbox.min_lat() <= b.max_lat()
                && b.min_lat() <= m.bbox.max_lat()
                && t.start() <= m.capture_time
                && m.capture_time <= t.end()
                && sat.is_none_or(|s| s == m.satellite)
        })
        .collect();
    hits.sort_by(|a, b| (a.capture_time, a.tile_id.as_str()).cmp(&(b.capture_time, b.tile_id.as_str())));
    hits.into_iter().map(|m| m.tile_id.as_str().to_owned()).collect()
}

#[test]
fn catalog_select_matches_linear_scan() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
    let layout = SceneLayout {
        side: 10,
        ..Default::default()
    };
    let spec = SceneSpec {
        layout,
        size: 2,
        bands: 1,
        ..Default::default()
    };
    for k in 0..600 {
        store.ingest(&spec.scene(k).unwrap()).unwrap();
    }
    let rows = store.catalog().rows();
    let span = layout.time_span(600);
    let queries = query_workload(&layout.extent(), &span, layout.tile_deg, 500, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut matched = 0;
    for (b, t) in &queries {
        let sat = match rng.gen_range(0..3) {
            0 => Some("LandSat8"),
            1 => Some("Sentinel2"),
            _ => None,
        };
        let got: Vec<String> = store
            .catalog_select(b, t, sat)
            .into_iter()
            .map(|m| m.tile_id.as_str().to_owned())
            .collect();
        let expect = linear_scan(&rows, b, t, sat);
        matched += usize::from(!expect.is_empty());
        assert_eq!(got, expect);
    }
    assert!(matched > 100);

    // a query equal to one tile's footprint and time returns that tile
    let m = &rows[123];
    let own = store.catalog_select(&m.bbox, &TimeRange::instant(m.capture_time), None);
    assert!(own.iter().any(|x| x.tile_id == m.tile_id));
}

#[test]
fn failing_a_node_during_ingest_with_three_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
    let spec = small_spec(2);
    store.ingest(&spec.scene(0).unwrap()).unwrap();
    store.fail_node(2).unwrap();
    assert!(matches!(
        store.ingest(&spec.scene(1).unwrap()),
        Err(Error::Replication { required: 3, live: 2 })
    ));
    store.restore_node(2).unwrap();
    store.ingest(&spec.scene(1).unwrap()).unwrap();
    assert_eq!(store.catalog().len(), 2);
}

#[test]
fn concurrent_ingest_of_distinct_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 4, IndexParams::default()).unwrap();
    let spec = small_spec(3);
    std::thread::scope(|s| {
        for w in 0..4 {
            let store = &store;
            s.spawn(move || {
                for k in (w..200).step_by(4) {
                    store.ingest(&spec.scene(k).unwrap()).unwrap();
                }
            });
        }
    });
    assert_eq!(store.catalog().len(), 200);
    let reopened = TileStore::open(dir.path()).unwrap();
    assert_eq!(reopened.catalog().len(), 200);
}
