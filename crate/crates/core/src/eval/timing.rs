use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub size: usize,
    pub wall_clock_s: f64,
    pub inner_fits: usize,
}

/// Run `method` once per training-set size; `run` returns the number of inner
/// fits it performed.
pub fn timing_harness<F>(method: &str, sizes: &[usize], mut run: F) -> Result<Vec<TimingRow>>
where
    F: FnMut(usize) -> Result<usize>,
{
    sizes
        .iter()
        .map(|&size| {
            let start = Instant::now();
            let inner_fits = run(size)?;
            Ok(TimingRow {
                method: method.to_string(),
                size,
                wall_clock_s: start.elapsed().as_secs_f64(),
                inner_fits,
            })
        })
        .collect()
}
