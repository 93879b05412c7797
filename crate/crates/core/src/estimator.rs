//! L2-regularised logistic regression fitted by damped Newton iterations.
//!
//! Binary problems fit a single model; more classes use one-vs-rest.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub l2: f64,
    pub fit_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            l2: 1e-4,
            fit_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// One binary logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularised loss after each accepted Newton step (first entry is the
    /// loss at the zero initialisation).
    pub loss_trace: Vec<f64>,
}

impl BinaryLogit {
    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub num_classes: usize,
    /// One model for binary tasks, one per class otherwise.
    pub models: Vec<BinaryLogit>,
    pub config: InnerConfig,
}

fn regularised_loss(x: &Matrix, rows: &[usize], y: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let m = rows.len() as f64;
    let mut nll = 0.0;
    for (k, &r) in rows.iter().enumerate() {
        let z = b + w.iter().zip(x.row(r)).map(|(a, c)| a * c).sum::<f64>();
        // log(1 + e^z) - y z, stable for large |z|
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        nll += softplus - y[k] * z;
    }
    nll / m + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn fit_binary(x: &Matrix, rows: &[usize], y: &[f64], cfg: &InnerConfig) -> BinaryLogit {
    let d = x.cols();
    let p = d + 1;
    let m = rows.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut loss = regularised_loss(x, rows, y, &w, b, cfg.l2);
    let mut trace = vec![loss];
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut xi = vec![0.0; p];
    for _ in 0..cfg.fit_iters {
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        for (k, &r) in rows.iter().enumerate() {
            let row = x.row(r);
            xi[..d].copy_from_slice(row);
            xi[d] = 1.0;
            let z = b + w.iter().zip(row).map(|(a, c)| a * c).sum::<f64>();
            let pr = sigmoid(z);
            let resid = pr - y[k];
            let s = pr * (1.0 - pr);
            for i in 0..p {
                grad[i] += resid * xi[i];
                let si = s * xi[i];
                if si != 0.0 {
                    let hrow = &mut hess[i * p..i * p + i + 1];
                    for (h, xj) in hrow.iter_mut().zip(&xi[..=i]) {
                        *h += si * xj;
                    }
                }
            }
        }
        for i in 0..p {
            grad[i] /= m;
            for j in 0..=i {
                hess[i * p + j] /= m;
            }
        }
        for i in 0..d {
            grad[i] += cfg.l2 * w[i];
            hess[i * p + i] += cfg.l2;
        }
        hess[d * p + d] += 1e-12;
        for i in 0..p {
            for j in 0..i {
                hess[j * p + i] = hess[i * p + j];
            }
        }
        let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax < cfg.tol {
            break;
        }
        let mut step = grad.clone();
        if cholesky_solve(&mut hess, &mut step, p).is_none() {
            // fall back to a gradient step
            step = grad.clone();
        }
        // backtracking keeps the regularised loss monotone
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nw: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let nb = b - t * step[d];
            let nl = regularised_loss(x, rows, y, &nw, nb, cfg.l2);
            if nl <= loss - 1e-4 * t * slope {
                w = nw;
                b = nb;
                loss = nl;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
        let smax = step.iter().fold(0.0f64, |a, v| a.max((t * v).abs()));
        if smax < cfg.tol {
            break;
        }
    }
    BinaryLogit {
        weights: w,
        bias: b,
        loss_trace: trace,
    }
}

impl LogisticModel {
    /// Fit on every row.
    pub fn fit(features: &Matrix, labels: &[usize], num_classes: usize, cfg: &InnerConfig) -> Result<Self> {
        let rows: Vec<usize> = (0..features.rows()).collect();
        Self::fit_rows(features, labels, &rows, num_classes, cfg)
    }

    /// Fit on the given row subset; `labels` is indexed like `features`.
    pub fn fit_rows(
        features: &Matrix,
        labels: &[usize],
        rows: &[usize],
        num_classes: usize,
        cfg: &InnerConfig,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::ShapeMismatch {
                op: "fit",
                lhs: vec![features.rows(), features.cols()],
                rhs: vec![labels.len()],
            });
        }
        let first = labels[rows[0]];
        if rows.len() < 2 || rows.iter().all(|&r| labels[r] == first) {
            return Err(Error::SingleClass);
        }
        if num_classes < 2 || rows.iter().any(|&r| labels[r] >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "labels must lie in [0, {num_classes})"
            )));
        }
        let targets = |class: usize| -> Vec<f64> {
            rows.iter()
                .map(|&r| if labels[r] == class { 1.0 } else { 0.0 })
                .collect()
        };
        let models = if num_classes == 2 {
            vec![fit_binary(features, rows, &targets(1), cfg)]
        } else {
            (0..num_classes)
                .map(|c| fit_binary(features, rows, &targets(c), cfg))
                .collect()
        };
        Ok(LogisticModel {
            num_classes,
            models,
            config: *cfg,
        })
    }

    /// Probability of class 1 (binary models only).
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.models[0].predict_proba(x)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        if self.num_classes == 2 {
            usize::from(self.models[0].decision(x) > 0.0)
        } else {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (c, m) in self.models.iter().enumerate() {
                let s = m.decision(x);
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            best
        }
    }

    /// Fraction of rows whose predicted class equals the label.
    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        if features.rows() == 0 {
            return Err(Error::Empty("evaluation set".into()));
        }
        let hits = (0..features.rows())
            .filter(|&i| self.predict(features.row(i)) == labels[i])
            .count();
        Ok(hits as f64 / features.rows() as f64)
    }
}

/// Inner estimator bound to a configuration, counting every fit request.
/// Clones share the counter.
#[derive(Debug, Clone, Default)]
pub struct InnerEstimator {
    pub config: InnerConfig,
    fits: Arc<AtomicUsize>,
}

impl InnerEstimator {
    pub fn new(config: InnerConfig) -> Self {
        InnerEstimator {
            config,
            fits: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Number of fit requests so far, degenerate ones included.
    pub fn fit_count(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    pub fn reset_count(&self) {
        self.fits.store(0, Ordering::Relaxed);
    }

    pub fn fit_rows(
        &self,
        features: &Matrix,
        labels: &[usize],
        rows: &[usize],
        num_classes: usize,
    ) -> Result<LogisticModel> {
        self.fits.fetch_add(1, Ordering::Relaxed);
        LogisticModel::fit_rows(features, labels, rows, num_classes, &self.config)
    }

    /// Validation accuracy of a fit on `rows`, or `None` when the subset
    /// cannot be fitted (empty, single row or single class).
    pub fn score_rows(
        &self,
        features: &Matrix,
        labels: &[usize],
        rows: &[usize],
        num_classes: usize,
        val_features: &Matrix,
        val_labels: &[usize],
    ) -> Result<Option<f64>> {
        match self.fit_rows(features, labels, rows, num_classes) {
            Ok(m) => m.accuracy(val_features, val_labels).map(Some),
            Err(Error::SingleClass | Error::Empty(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
