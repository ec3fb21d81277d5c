//! Benchmark families: kidney exchange and single-machine total tardiness.

mod kidney;
mod tardiness;

pub use kidney::{build_kidney_ilp, enumerate_cycles, gen_kidney, BloodType, KidneyInstance, KidneyParams};
pub use tardiness::{build_tardiness_ilp, gen_tardiness, TardinessInstance};

use crate::error::{FairError, Result};

/// Non-empty lines with `#` comments stripped, paired with 1-based line numbers.
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (k + 1, body.split_whitespace().collect()))
    })
}

pub(crate) fn field<T: std::str::FromStr>(line: usize, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| FairError::Parse(format!("line {line}: cannot read {raw:?}")))
}
