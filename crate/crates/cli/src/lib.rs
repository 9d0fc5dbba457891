//! Command-line and HTTP front ends for a tessera store.

pub mod service;

use tessera_core::{Error, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_STORE: i32 = 3;
pub const EXIT_TIMEOUT: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation | ErrorClass::NotFound => EXIT_VALIDATION,
        ErrorClass::Store => EXIT_STORE,
        ErrorClass::Timeout => EXIT_TIMEOUT,
    }
}

/// Query counts from `a..b` (step `a`), `a..b:step`, or `a,b,c`.
pub fn parse_counts(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad count {t:?}"));
    let counts = if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, num(lo)?),
        };
        let lo = num(lo)?;
        if step == 0 || lo > hi {
            return Err(format!("empty count range {s:?}"));
        }
        (lo..=hi).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if counts.is_empty() || counts.contains(&0) || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("counts must be positive and increasing: {s:?}"));
    }
    Ok(counts)
}
