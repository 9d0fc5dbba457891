//! Benchmark harness: query scaling per index method and index overhead.
//!
//! Both benches repeat every measurement (50 times by default) and report
//! mean ± standard deviation in a [`BenchReport`].

pub mod overhead;
pub mod report;
pub mod scaling;

pub use overhead::{bench_overhead, bench_overhead_rows, OverheadConfig};
pub use report::{BenchReport, CountStat, LinearFit, Stat};
pub use scaling::{bench_query_scaling, bench_rows, brute_force, ScalingConfig, BRUTE_FORCE, MULTI};
