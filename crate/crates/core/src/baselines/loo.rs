use super::Game;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::valuation::ValueReport;

/// `v(all) - v(all without i)` for every record; exactly `N + 1` fits.
pub fn loo_values(game: &Game, exec: Exec) -> Result<ValueReport> {
    let n = game.train.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: n,
        });
    }
    let first = game.train.labels[0];
    if game.train.labels.iter().all(|&l| l == first) {
        return Err(Error::SingleClass);
    }
    let all: Vec<usize> = (0..n).collect();
    let full = game.value(&all)?;
    let values = par::try_map_range(exec, n, |i| {
        let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        Ok::<_, Error>(full - game.value(&rest)?)
    })?;
    Ok(ValueReport::new("loo", values))
}
