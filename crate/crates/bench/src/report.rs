use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation of repeated measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub min_ms: f64,
    pub samples: usize,
}

impl Stat {
    pub fn from_durations(samples: &[Duration]) -> Self {
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        Self::from_ms(&ms)
    }

    pub fn from_ms(ms: &[f64]) -> Self {
        let n = ms.len();
        if n == 0 {
            return Self {
                mean_ms: 0.0,
                stddev_ms: 0.0,
                min_ms: 0.0,
                samples: 0,
            };
        }
        let mean = ms.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean_ms: mean,
            stddev_ms: var.sqrt(),
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            samples: n,
        }
    }
}

/// One point of an elapsed-vs-query-count series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountStat {
    pub count: usize,
    #[serde(flatten)]
    pub stat: Stat,
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub method: String,
    pub slope_ms_per_query: f64,
    pub intercept_ms: f64,
    pub r_squared: f64,
}

impl LinearFit {
    /// `None` with fewer than two distinct x values.
    pub fn fit(method: &str, points: &[(f64, f64)]) -> Option<Self> {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if points.len() < 2 || sxx == 0.0 {
            return None;
        }
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
        let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
        Some(Self {
            method: method.to_string(),
            slope_ms_per_query: slope,
            intercept_ms: intercept,
            r_squared: r2.clamp(0.0, 1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub repeat: usize,
    pub seed: u64,
    pub tiles: usize,
    /// Threads the machine can run at once while measuring.
    pub hardware_threads: usize,
    /// Method name to elapsed time per query count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub elapsed: BTreeMap<String, Vec<CountStat>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sizes_bytes: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub build: BTreeMap<String, Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<LinearFit>,
    /// Queries whose racing result differed from the linear scan.
    #[serde(default)]
    pub mismatches: usize,
}

impl BenchReport {
    pub fn new(scenario: &str, repeat: usize, seed: u64, tiles: usize) -> Self {
        Self {
            scenario: scenario.to_string(),
            repeat,
            seed,
            tiles,
            hardware_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            elapsed: BTreeMap::new(),
            sizes_bytes: BTreeMap::new(),
            build: BTreeMap::new(),
            fit: None,
            mismatches: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn mean_at(&self, method: &str, count: usize) -> Option<f64> {
        self.elapsed
            .get(method)?
            .iter()
            .find(|p| p.count == count)
            .map(|p| p.stat.mean_ms)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} tiles, {} repetitions, seed {}, {} hardware thread(s)",
            self.scenario, self.tiles, self.repeat, self.seed, self.hardware_threads
        );
        if !self.elapsed.is_empty() {
            let methods: Vec<&String> = self.elapsed.keys().collect();
            let _ = write!(s, "\n{:>7}", "queries");
            for m in &methods {
                let _ = write!(s, " {:>22}", format!("{m} (ms)"));
            }
            s.push('\n');
            let counts: Vec<usize> = self.elapsed[methods[0]].iter().map(|p| p.count).collect();
            for c in counts {
                let _ = write!(s, "{c:>7}");
                for m in &methods {
                    let cell = self
                        .elapsed[*m]
                        .iter()
                        .find(|p| p.count == c)
                        .map_or_else(|| "-".to_string(), |p| format!("{:.3} ± {:.3}", p.stat.mean_ms, p.stat.stddev_ms));
                    let _ = write!(s, " {cell:>22}");
                }
                s.push('\n');
            }
        }
        if let Some(f) = &self.fit {
            let _ = writeln!(
                s,
                "\n{} fit: {:.5} ms/query + {:.3} ms, R² = {:.4}",
                f.method, f.slope_ms_per_query, f.intercept_ms, f.r_squared
            );
        }
        if !self.sizes_bytes.is_empty() {
            let _ = writeln!(s, "\n{:<10} {:>12} {:>22}", "method", "bytes", "build (ms)");
            for (m, bytes) in &self.sizes_bytes {
                let build = self
                    .build
                    .get(m)
                    .map_or_else(|| "-".to_string(), |b| format!("{:.3} ± {:.3}", b.mean_ms, b.stddev_ms));
                let _ = writeln!(s, "{m:<10} {bytes:>12} {build:>22}");
            }
        }
        if self.mismatches > 0 {
            let _ = writeln!(s, "\nWARNING: {} queries disagreed with the linear scan", self.mismatches);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_of_known_samples() {
        let s = Stat::from_ms(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean_ms, 5.0);
        assert!((s.stddev_ms - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.min_ms, 2.0);
        assert_eq!(Stat::from_ms(&[3.0]).stddev_ms, 0.0);
        assert_eq!(Stat::from_ms(&[]).samples, 0);
    }

    #[test]
    fn exact_line_fits_perfectly() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64 * 100.0, 0.02 * i as f64 * 100.0 + 1.5)).collect();
        let f = LinearFit::fit("multi", &pts).unwrap();
        assert!((f.slope_ms_per_query - 0.02).abs() < 1e-12);
        assert!((f.intercept_ms - 1.5).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(LinearFit::fit("multi", &[(1.0, 1.0)]).is_none());
        assert!(LinearFit::fit("multi", &[(1.0, 1.0), (1.0, 2.0)]).is_none());
    }

    #[test]
    fn noisy_fit_is_bounded() {
        let pts = [(1.0, 5.0), (2.0, 1.0), (3.0, 4.0), (4.0, 2.0)];
        let f = LinearFit::fit("x", &pts).unwrap();
        assert!((0.0..=1.0).contains(&f.r_squared));
    }

    #[test]
    fn json_roundtrip() {
        let mut r = BenchReport::new("scaling", 2, 1, 10);
        r.elapsed.insert(
            "multi".into(),
            vec![CountStat {
                count: 100,
                stat: Stat::from_ms(&[1.0, 2.0]),
            }],
        );
        r.sizes_bytes.insert("multi".into(), 77);
        let back: BenchReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["elapsed"]["multi"][0]["mean_ms"], 1.5);
        assert!(r.to_text().contains("1.500 ± 0.707"));
    }
}
