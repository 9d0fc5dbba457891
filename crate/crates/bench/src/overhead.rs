//! Serialized size and build time of each index and of the multi-index.

use std::time::Duration;

use tessera_core::synth::{metadata_records, SceneLayout};
use tessera_core::{build_all, index_build, IndexEntry, IndexKind, IndexParams, Result, TileMetadata};

use crate::report::{BenchReport, Stat};
use crate::scaling::{DEFAULT_REPEAT, MULTI};

#[derive(Debug, Clone)]
pub struct OverheadConfig {
    pub tiles: usize,
    pub repeat: usize,
    pub layout: SceneLayout,
    pub params: IndexParams,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self {
            tiles: 9000,
            repeat: DEFAULT_REPEAT,
            layout: SceneLayout::default(),
            params: IndexParams::default(),
        }
    }
}

pub fn bench_overhead(cfg: &OverheadConfig) -> Result<BenchReport> {
    let rows = metadata_records(&cfg.layout, cfg.tiles, 256, &cfg.params, 3);
    bench_overhead_rows(&rows, cfg)
}

/// Each single kind is built alone on the calling thread; the multi-index
/// figure is the wall time of building all three concurrently.
pub fn bench_overhead_rows(rows: &[TileMetadata], cfg: &OverheadConfig) -> Result<BenchReport> {
    let entries: Vec<IndexEntry> = rows.iter().map(TileMetadata::index_entry).collect();
    let mut report = BenchReport::new("overhead", cfg.repeat, 0, rows.len());

    let warm = build_all(&entries, &cfg.params)?;
    for k in IndexKind::ALL {
        report
            .sizes_bytes
            .insert(k.as_str().to_string(), warm.stats()[&k].serialized_size as u64);
    }
    report.sizes_bytes.insert(MULTI.to_string(), warm.serialized_size() as u64);
    drop(warm);

    let mut single: Vec<Vec<Duration>> = vec![Vec::with_capacity(cfg.repeat); IndexKind::ALL.len()];
    let mut multi = Vec::with_capacity(cfg.repeat);
    for _ in 0..cfg.repeat {
        for (i, k) in IndexKind::ALL.iter().enumerate() {
            single[i].push(index_build(*k, &entries, &cfg.params)?.build_time);
        }
        multi.push(build_all(&entries, &cfg.params)?.build_wall_time());
    }
    for (i, k) in IndexKind::ALL.iter().enumerate() {
        report.build.insert(k.as_str().to_string(), Stat::from_durations(&single[i]));
    }
    report.build.insert(MULTI.to_string(), Stat::from_durations(&multi));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_compose() {
        let cfg = OverheadConfig {
            tiles: 300,
            repeat: 2,
            ..Default::default()
        };
        let r = bench_overhead(&cfg).unwrap();
        let singles: u64 = IndexKind::ALL.iter().map(|k| r.sizes_bytes[k.as_str()]).sum();
        assert!(r.sizes_bytes[MULTI] > singles);
        assert!(r.sizes_bytes[MULTI] - singles < 100);
        assert_eq!(r.build.len(), 4);
        assert!(r.build.values().all(|s| s.samples == 2));
    }
}
