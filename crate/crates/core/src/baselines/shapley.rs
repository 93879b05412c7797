use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Game;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::valuation::ValueReport;

/// Largest training set exact enumeration accepts (2^N coalition fits).
pub const MAX_EXACT_RECORDS: usize = 10;

/// Shapley values of an `n`-player game given its payoff for every coalition,
/// `payoff[mask]` with bit `i` set when player `i` is in.
pub fn shapley_from_game(n: usize, payoff: &[f64]) -> Result<Vec<f64>> {
    if n >= usize::BITS as usize || payoff.len() != 1usize << n {
        return Err(Error::InvalidArgument(format!(
            "expected {} coalition payoffs for {n} players, got {}",
            1u128 << n.min(127),
            payoff.len()
        )));
    }
    // weight of a coalition of size s not containing i: s! (n-s-1)! / n!
    let mut weight = vec![0.0; n.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(n) {
        let mut x = 1.0 / n as f64;
        // divide by C(n-1, s)
        for k in 0..s {
            x *= (k + 1) as f64 / (n - 1 - k) as f64;
        }
        *w = x;
    }
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..payoff.len() {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                acc += weight[s] * (payoff[mask | bit] - payoff[mask]);
            }
        }
        *p = acc;
    }
    Ok(phi)
}

/// Exact Shapley values by enumerating every coalition. Test oracle only.
pub fn exact_shapley(game: &Game, exec: Exec) -> Result<ValueReport> {
    let n = game.train.len();
    if n > MAX_EXACT_RECORDS {
        return Err(Error::InvalidArgument(format!(
            "exact Shapley enumerates 2^N coalitions; N = {n} exceeds {MAX_EXACT_RECORDS}"
        )));
    }
    let payoff = par::try_map_range(exec, 1 << n, |mask| {
        let rows: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        game.value(&rows)
    })?;
    Ok(ValueReport::new("exact_shapley", shapley_from_game(n, &payoff)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapleyConfig {
    pub max_permutations: usize,
    pub truncation_tol: f64,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            max_permutations: 500,
            truncation_tol: 0.01,
            convergence_tol: 1e-3,
            convergence_window: 20,
            seed: 0,
        }
    }
}

impl ShapleyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_permutations == 0 {
            return Err(Error::Config("max_permutations must be at least 1".into()));
        }
        if self.convergence_window == 0 {
            return Err(Error::Config("convergence_window must be at least 1".into()));
        }
        if !(self.truncation_tol > 0.0) || !(self.convergence_tol > 0.0) {
            return Err(Error::Config("Shapley tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmcReport {
    pub values: ValueReport,
    pub permutations: usize,
    /// Mean number of positions scanned before truncation.
    pub mean_scan_length: f64,
}

/// Marginal contributions along one permutation, zero past the truncation
/// point, plus the number of positions actually scanned.
fn scan_permutation(game: &Game, order: &[usize], full: f64, tol: f64) -> Result<(Vec<f64>, usize)> {
    let mut marginals = vec![0.0; order.len()];
    let mut prefix = Vec::with_capacity(order.len());
    let mut prev = 0.0;
    let mut scanned = 0;
    for (j, &i) in order.iter().enumerate() {
        if j > 0 && (full - prev).abs() < tol {
            break;
        }
        prefix.push(i);
        let v = game.value(&prefix)?;
        marginals[i] = v - prev;
        prev = v;
        scanned += 1;
    }
    Ok((marginals, scanned))
}

/// Truncated Monte-Carlo Shapley values.
///
/// Permutations are processed in blocks of `convergence_window`; each block
/// runs concurrently under `exec` and the convergence test (mean absolute
/// change of the running means against one block earlier) happens between
/// blocks, so the result does not depend on the execution mode.
pub fn tmc_shapley(game: &Game, cfg: &ShapleyConfig, exec: Exec) -> Result<TmcReport> {
    cfg.validate()?;
    let n = game.train.len();
    if n == 0 {
        return Err(Error::Empty("training set".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let full = game.value(&all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sums = vec![0.0; n];
    let mut done = 0usize;
    let mut scanned_total = 0usize;
    let mut previous_means: Option<Vec<f64>> = None;
    while done < cfg.max_permutations {
        let block = cfg.convergence_window.min(cfg.max_permutations - done);
        let seeds: Vec<u64> = (0..block).map(|_| rng.random()).collect();
        let scans = par::map_slice(exec, &seeds, |&s| {
            let mut order = all.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
            scan_permutation(game, &order, full, cfg.truncation_tol)
        });
        for scan in scans {
            let (marginals, scanned) = scan?;
            sums.iter_mut().zip(&marginals).for_each(|(s, m)| *s += m);
            scanned_total += scanned;
        }
        done += block;
        let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
        if let Some(prev) = &previous_means {
            let change = means.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
            if change < cfg.convergence_tol {
                previous_means = Some(means);
                break;
            }
        }
        previous_means = Some(means);
    }
    let values = previous_means.unwrap_or_else(|| vec![0.0; n]);
    Ok(TmcReport {
        values: ValueReport::new("tmc_shapley", values),
        permutations: done,
        mean_scan_length: scanned_total as f64 / done.max(1) as f64,
    })
}
