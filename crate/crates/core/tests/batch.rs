use std::sync::Arc;
use std::time::Duration;

use tessera_core::synth::{query_workload, SceneLayout, SceneSpec};
use tessera_core::{EngineConfig, IndexParams, InfoKind, Query, System, TileStore};

#[test]
fn batch_elapsed_grows_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
    let layout = SceneLayout {
        side: 12,
        ..Default::default()
    };
    let spec = SceneSpec {
        layout,
        size: 4,
        ..Default::default()
    };
    for k in 0..288 {
        store.ingest(&spec.scene(k).unwrap()).unwrap();
    }
    let sys = System::new(Arc::new(store), EngineConfig::default()).unwrap();
    let workload: Vec<Query> = query_workload(&layout.extent(), &layout.time_span(288), layout.tile_deg, 800, 8)
        .into_iter()
        .map(|(b, t)| Query::new(b, t, None, InfoKind::Ndvi).unwrap())
        .collect();
    // warm the page cache
    sys.batch_execute(&workload, 1).unwrap();

    let run = |n: usize| {
        let out = sys.batch_execute(&workload[..n], 1).unwrap();
        assert!(out.results.iter().all(|r| r.is_ok()));
        out.elapsed
    };
    for n in [100, 200, 400] {
        // interleaved runs, minimum of each: the least-disturbed sample
        let (mut a, mut b) = (Duration::MAX, Duration::MAX);
        for _ in 0..9 {
            a = a.min(run(n));
            b = b.min(run(2 * n));
        }
        let ratio = b.as_secs_f64() / a.as_secs_f64();
        assert!((1.5..=2.5).contains(&ratio), "elapsed({})/elapsed({n}) = {ratio:.3}", 2 * n);
    }
}

#[test]
fn identical_queries_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
    let spec = SceneSpec {
        layout: SceneLayout {
            side: 3,
            ..Default::default()
        },
        size: 8,
        ..Default::default()
    };
    for k in 0..9 {
        store.ingest(&spec.scene(k).unwrap()).unwrap();
    }
    let sys = System::new(Arc::new(store), EngineConfig::default()).unwrap();
    let q = Query::new(spec.layout.extent(), tessera_core::TimeRange::ALL, None, InfoKind::Dvi).unwrap();
    let out = sys.batch_execute(&vec![q; 10], 1).unwrap();
    let first = out.results[0].as_ref().unwrap();
    assert_eq!(first.tile_count, 9);
    for r in &out.results {
        assert_eq!(r.as_ref().unwrap().mosaic, first.mosaic);
    }
}

