use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{log_softmax, Classifier};
use crate::dataset::LabeledDataset;
use crate::error::{Error, PartialFit, Result};

/// Multinomial logit with `K × (p+1)` coefficients, intercept first.
/// The last class is the reference and its row is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl LogisticModel {
    pub fn zeros(k: usize, p: usize) -> Self {
        LogisticModel { coefficients: vec![vec![0.0; p + 1]; k], feature_names: None }
    }

    fn from_params(k: usize, p: usize, beta: &[f64]) -> Self {
        let mut m = Self::zeros(k, p);
        for (row, chunk) in m.coefficients.iter_mut().zip(beta.chunks_exact(p + 1)) {
            row.copy_from_slice(chunk);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.coefficients.last().ok_or_else(|| Error::invalid("logistic model has no classes"))?;
        let width = last.len();
        if width == 0 || self.coefficients.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("coefficient rows have unequal lengths"));
        }
        if last.iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("reference class coefficients must be zero"));
        }
        if self.coefficients.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite logistic coefficient"));
        }
        if let Some(names) = &self.feature_names {
            if names.len() + 1 != width {
                return Err(Error::invalid("feature name count differs from dimension"));
            }
        }
        Ok(())
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|row| row[0] + row[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            .collect()
    }
}

pub fn logistic_log_posterior(m: &LogisticModel, x: &[f64]) -> Result<Vec<f64>> {
    m.check_input(x)?;
    Ok(log_softmax(&m.scores(x)))
}

impl Classifier for LogisticModel {
    fn n_features(&self) -> usize {
        self.coefficients.first().map_or(0, |r| r.len() - 1)
    }

    fn n_classes(&self) -> usize {
        self.coefficients.len()
    }

    fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        logistic_log_posterior(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    pub ridge: f64,
    pub max_iter: usize,
    /// Gradient max-norm at which Newton stops.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { ridge: 1e-6, max_iter: 200, tol: 1e-8 }
    }
}

/// Negative penalized multinomial log-likelihood, divided by `n`:
/// `f(β) = −(1/n)[Σ_i log π_{g_i}(x_i) − (ridge/2)‖β_slopes‖²]`.
///
/// Parameters are the free rows `0..K−1`, flattened row-major with
/// `p+1` entries each.
pub struct LogisticObjective<'a> {
    d: &'a LabeledDataset,
    ridge: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(d: &'a LabeledDataset, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be a nonnegative number, got {ridge}")));
        }
        if d.is_empty() {
            return Err(Error::invalid("cannot fit logistic regression to an empty dataset"));
        }
        Ok(LogisticObjective { d, ridge })
    }

    pub fn n_params(&self) -> usize {
        (self.d.n_classes() - 1) * (self.d.p() + 1)
    }

    fn probabilities(&self, beta: &[f64], x: &[f64], out: &mut [f64]) {
        let w = self.d.p() + 1;
        let free = self.d.n_classes() - 1;
        for k in 0..free {
            let row = &beta[k * w..(k + 1) * w];
            out[k] = row[0] + row[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        }
        out[free] = 0.0;
        let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        out.iter_mut().for_each(|v| *v /= total);
    }

    fn ridge_term(&self, beta: &[f64]) -> f64 {
        let w = self.d.p() + 1;
        beta.chunks_exact(w).map(|r| r[1..].iter().map(|b| b * b).sum::<f64>()).sum::<f64>() * self.ridge / 2.0
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let mut lp = vec![0.0; self.d.n_classes()];
        let w = self.d.p() + 1;
        let free = self.d.n_classes() - 1;
        let mut ll = 0.0;
        for (x, &g) in self.d.rows().zip(self.d.labels()) {
            for k in 0..free {
                let row = &beta[k * w..(k + 1) * w];
                lp[k] = row[0] + row[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            }
            lp[free] = 0.0;
            ll += lp[g] - super::log_sum_exp(&lp);
        }
        (self.ridge_term(beta) - ll) / self.d.n() as f64
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        self.derivatives(beta, false).0
    }

    /// Gradient and, when requested, the Hessian.
    fn derivatives(&self, beta: &[f64], hessian: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let w = self.d.p() + 1;
        let free = self.d.n_classes() - 1;
        let m = self.n_params();
        let mut g = vec![0.0; m];
        let mut h = hessian.then(|| DMatrix::<f64>::zeros(m, m));
        let mut prob = vec![0.0; self.d.n_classes()];
        let mut xt = vec![1.0; w];
        for (x, &label) in self.d.rows().zip(self.d.labels()) {
            xt[1..].copy_from_slice(x);
            self.probabilities(beta, x, &mut prob);
            for k in 0..free {
                let r = prob[k] - if label == k { 1.0 } else { 0.0 };
                for (gj, xj) in g[k * w..(k + 1) * w].iter_mut().zip(&xt) {
                    *gj += r * xj;
                }
            }
            if let Some(h) = h.as_mut() {
                for k in 0..free {
                    for l in k..free {
                        let c = if k == l { prob[k] * (1.0 - prob[k]) } else { -prob[k] * prob[l] };
                        for a in 0..w {
                            let ca = c * xt[a];
                            for b in 0..w {
                                h[(k * w + a, l * w + b)] += ca * xt[b];
                            }
                        }
                    }
                }
            }
        }
        for k in 0..free {
            for j in 1..w {
                g[k * w + j] += self.ridge * beta[k * w + j];
                if let Some(h) = h.as_mut() {
                    h[(k * w + j, k * w + j)] += self.ridge;
                }
            }
        }
        let n = self.d.n() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        if let Some(h) = h.as_mut() {
            for k in 0..free {
                for l in k + 1..free {
                    for a in 0..w {
                        for b in 0..w {
                            h[(l * w + b, k * w + a)] = h[(k * w + a, l * w + b)];
                        }
                    }
                }
            }
            *h /= n;
        }
        (g, h)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton's method with Armijo backtracking; a Levenberg shift is added
/// whenever the Hessian is not numerically positive definite.
pub fn fit_logistic_regression(d: &LabeledDataset, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if cfg.tol <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::invalid("logistic tolerance and iteration limit must be positive"));
    }
    let obj = LogisticObjective::new(d, cfg.ridge)?;
    let (k, p) = (d.n_classes(), d.p());
    let counts = d.class_counts();
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {} has no observations", c + 1)));
    }
    let names = d.feature_names().map(<[String]>::to_vec);
    let mut beta = vec![0.0; obj.n_params()];
    for c in 0..k - 1 {
        beta[c * (p + 1)] = (counts[c] as f64 / counts[k - 1] as f64).ln();
    }
    let mut f = obj.value(&beta);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let (g, h) = obj.derivatives(&beta, true);
        grad_norm = max_norm(&g);
        if grad_norm < cfg.tol {
            let mut m = LogisticModel::from_params(k, p, &beta);
            m.feature_names = names;
            return Ok(m);
        }
        let h = h.expect("hessian requested");
        let gv = DVector::from_column_slice(&g);
        let mut shift = 0.0;
        let dir = loop {
            let mut hs = h.clone();
            for i in 0..hs.nrows() {
                hs[(i, i)] += shift;
            }
            if let Some(ch) = hs.cholesky() {
                break -ch.solve(&gv);
            }
            shift = if shift == 0.0 { 1e-10 * (1.0 + h.diagonal().amax()) } else { shift * 10.0 };
        };
        let slope = gv.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = beta.iter().zip(dir.iter()).map(|(b, s)| b + t * s).collect();
            let ft = obj.value(&trial);
            if ft <= f + 1e-4 * t * slope {
                beta = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Rounding floor: f cannot decrease along the Newton direction.
            break;
        }
    }
    let g = obj.gradient(&beta);
    grad_norm = grad_norm.min(max_norm(&g));
    if max_norm(&g) < cfg.tol {
        let mut m = LogisticModel::from_params(k, p, &beta);
        m.feature_names = names;
        return Ok(m);
    }
    let mut model = LogisticModel::from_params(k, p, &beta);
    model.feature_names = names;
    Err(Error::MaxIterationsExceeded {
        iterations: cfg.max_iter,
        partial: Box::new(PartialFit::Logistic { model, gradient_norm: grad_norm }),
    })
}
