//! Simulation generators: structured precision/covariance models, orthogonal
//! class means, Gaussian sampling and nonparanormal marginal transforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{cholesky, invert_pd, SymMatrix};

/// Name of the generator recorded in manifests.
pub const RNG_NAME: &str = "chacha8";

/// Structured `p × p` matrices used as precision or covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MatrixModel {
    /// 1 on the diagonal, `rho` elsewhere.
    Full { rho: f64 },
    /// `rho^|i−j|`.
    Decreasing { rho: f64 },
    /// `rho` among the first `q` indices, identity elsewhere.
    Block { rho: f64, q: usize },
    /// `count` diagonal blocks of the full model; sizes `⌊p/count⌋` or one
    /// more, larger blocks first.
    Blocks { rho: f64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionModelSpec {
    pub model: MatrixModel,
    pub p: usize,
}

/// Sizes of `count` contiguous blocks covering `p` features.
pub fn block_sizes(p: usize, count: usize) -> Vec<usize> {
    let base = p / count;
    (0..count).map(|b| base + usize::from(b < p % count)).collect()
}

/// Block index of every feature under [`block_sizes`].
pub fn block_labels(p: usize, count: usize) -> Vec<usize> {
    block_sizes(p, count).iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect()
}

pub fn build_matrix(model: MatrixModel, p: usize) -> Result<SymMatrix> {
    if p == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let m = match model {
        MatrixModel::Full { rho } => SymMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { rho }),
        MatrixModel::Decreasing { rho } => SymMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { rho.powi((j - i) as i32) }),
        MatrixModel::Block { rho, q } => {
            if q == 0 || q > p {
                return Err(Error::invalid(format!("block size {q} must lie in 1..={p}")));
            }
            SymMatrix::from_fn(p, |i, j| match (i == j, j < q) {
                (true, _) => 1.0,
                (false, true) => rho,
                (false, false) => 0.0,
            })
        }
        MatrixModel::Blocks { rho, count } => {
            if count == 0 || count > p {
                return Err(Error::invalid(format!("block count {count} must lie in 1..={p}")));
            }
            let labels = block_labels(p, count);
            SymMatrix::from_fn(p, |i, j| match (i == j, labels[i] == labels[j]) {
                (true, _) => 1.0,
                (false, true) => rho,
                (false, false) => 0.0,
            })
        }
    };
    if !m.is_finite() {
        return Err(Error::invalid("model parameter produced non-finite entries"));
    }
    cholesky(&m).map_err(|_| Error::not_pd(format!("{model:?} with p = {p} is not positive definite")))?;
    Ok(m)
}

pub fn build_precision(spec: &PrecisionModelSpec) -> Result<SymMatrix> {
    build_matrix(spec.model, spec.p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum TransformSpec {
    Identity,
    /// `sign(t)|t|^alpha` on column-centered values.
    Power { alpha: f64 },
    /// `Φ((t − mu)/sigma)`.
    GaussianCdf { mu: f64, sigma: f64 },
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformSpec::Power { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::invalid(format!("power transform needs alpha > 0, got {alpha}")))
            }
            TransformSpec::GaussianCdf { mu, sigma } if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) => {
                Err(Error::invalid(format!("CDF transform needs finite mu and sigma > 0, got ({mu}, {sigma})")))
            }
            _ => Ok(()),
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn column_moments(z: &[f64], p: usize, j: usize) -> (f64, f64) {
    let n = (z.len() / p) as f64;
    let mean = z.iter().skip(j).step_by(p).sum::<f64>() / n;
    let var = z.iter().skip(j).step_by(p).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Applies `t` to every entry of the row-major `n × p` matrix `z`, then
/// restores each column's empirical mean and standard deviation.
/// Constant columns are left untouched.
pub fn apply_transform(z: &[f64], p: usize, t: &TransformSpec) -> Result<Vec<f64>> {
    t.validate()?;
    if p == 0 || !z.len().is_multiple_of(p) {
        return Err(Error::invalid("matrix values do not form whole rows"));
    }
    if *t == TransformSpec::Identity || z.is_empty() {
        return Ok(z.to_vec());
    }
    let mut out = z.to_vec();
    for j in 0..p {
        let (mean, sd) = column_moments(z, p, j);
        if sd == 0.0 {
            continue;
        }
        for v in out.iter_mut().skip(j).step_by(p) {
            *v = match *t {
                TransformSpec::Power { alpha } => {
                    let c = *v - mean;
                    c.signum() * c.abs().powf(alpha)
                }
                TransformSpec::GaussianCdf { mu, sigma } => normal_cdf((*v - mu) / sigma),
                TransformSpec::Identity => unreachable!(),
            };
        }
        let (tm, tsd) = column_moments(&out, p, j);
        if tsd == 0.0 || !tsd.is_finite() {
            return Err(Error::DegenerateTransform { column: j });
        }
        for v in out.iter_mut().skip(j).step_by(p) {
            *v = mean + sd * (*v - tm) / tsd;
        }
    }
    Ok(out)
}

/// Divisor inside the mean-norm rule `√(tr Σ / denom)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanDenominator {
    P,
    HalfP,
}

impl MeanDenominator {
    fn value(self, p: usize) -> f64 {
        match self {
            MeanDenominator::P => p as f64,
            MeanDenominator::HalfP => p as f64 / 2.0,
        }
    }
}

/// `K` mutually orthogonal vectors (Gram–Schmidt on Gaussian draws), the
/// `k`-th scaled to norm `√(tr Σ_k / denom)`.
pub fn orthogonal_means(k: usize, p: usize, sigmas: &[SymMatrix], denom: MeanDenominator, seed: u64) -> Result<Vec<Vec<f64>>> {
    orthogonal_means_with(k, p, sigmas, denom, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn orthogonal_means_with(
    k: usize,
    p: usize,
    sigmas: &[SymMatrix],
    denom: MeanDenominator,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if k > p {
        return Err(Error::invalid(format!("cannot build {k} orthogonal means in dimension {p}")));
    }
    if sigmas.len() != k || sigmas.iter().any(|s| s.dim() != p) {
        return Err(Error::invalid("need one p × p covariance per class"));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Ok(basis
        .into_iter()
        .zip(sigmas)
        .map(|(b, s)| {
            let trace: f64 = s.diagonal().iter().sum();
            let scale = (trace / denom.value(p)).sqrt();
            b.into_iter().map(|x| x * scale).collect()
        })
        .collect())
}

/// `n` rows `μ + L z`, `Σ = L Lᵀ`, row-major.
pub fn sample_class(n: usize, mu: &[f64], sigma: &SymMatrix, seed: u64) -> Result<Vec<f64>> {
    sample_class_rng(n, mu, sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn sample_class_rng(n: usize, mu: &[f64], sigma: &SymMatrix, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let p = sigma.dim();
    if mu.len() != p {
        return Err(Error::invalid("mean length differs from covariance dimension"));
    }
    let l = cholesky(sigma)?;
    let mut out = Vec::with_capacity(n * p);
    let mut z = vec![0.0; p];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for i in 0..p {
            out.push(mu[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>());
        }
    }
    Ok(out)
}

/// Whether a class's structured matrix is its precision or its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRole {
    Precision,
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub model: MatrixModel,
    pub role: MatrixRole,
    pub transform: TransformSpec,
}

impl ClassSpec {
    pub fn covariance(&self, p: usize) -> Result<SymMatrix> {
        let m = build_matrix(self.model, p)?;
        match self.role {
            MatrixRole::Covariance => Ok(m),
            MatrixRole::Precision => invert_pd(&m),
        }
    }
}

/// Class counts are per class; the same per-class counts apply to every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub p: usize,
    pub classes: Vec<ClassSpec>,
    pub mean_denominator: MeanDenominator,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.classes.is_empty() {
            return Err(Error::invalid("simulation needs p ≥ 1 and at least one class"));
        }
        if self.n_train == 0 || self.n_valid == 0 {
            return Err(Error::invalid("training and validation sizes must be at least 1"));
        }
        self.classes.iter().try_for_each(|c| c.transform.validate())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimulationSpec { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// Means are drawn from stream 0 of a ChaCha8 generator seeded with
/// `spec.seed`, class `k` rows from stream `k + 1`. Each class draws all of
/// its train, validation and test rows at once, is transformed jointly and
/// then split in that order.
pub fn generate(spec: &SimulationSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let (k, p) = (spec.k(), spec.p);
    let sigmas = spec.classes.iter().map(|c| c.covariance(p)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = orthogonal_means_with(k, p, &sigmas, spec.mean_denominator, &mut rng)?;
    let per_class = spec.n_train + spec.n_valid + spec.n_test;
    let mut parts: [(Vec<f64>, Vec<usize>); 3] = Default::default();
    for (c, class) in spec.classes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64 + 1);
        let z = sample_class_rng(per_class, &means[c], &sigmas[c], &mut rng)?;
        let x = apply_transform(&z, p, &class.transform)?;
        let bounds = [0, spec.n_train, spec.n_train + spec.n_valid, per_class];
        for (s, part) in parts.iter_mut().enumerate() {
            part.0.extend_from_slice(&x[bounds[s] * p..bounds[s + 1] * p]);
            part.1.extend(std::iter::repeat_n(c, bounds[s + 1] - bounds[s]));
        }
    }
    let [train, validation, test] = parts.map(|(x, labels)| LabeledDataset::new(p, x, labels, k));
    Ok(SimulatedData { train: train?, validation: validation?, test: test? })
}
