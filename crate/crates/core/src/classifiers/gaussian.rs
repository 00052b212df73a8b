use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{cholesky, invert_pd, logdet_pd, SymMatrix};
use crate::screening::{FeaturePartition, ScreenedSolver};
use crate::solver::{AdmmConfig, PrecisionSet, SolveDiagnostics};

/// Per-class sample moments (MLE covariance, divisor `n_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub s_list: Vec<SymMatrix>,
    pub n_list: Vec<usize>,
}

impl Moments {
    pub fn log_priors(&self) -> Vec<f64> {
        self.priors.iter().map(|p| p.ln()).collect()
    }

    /// True when every class covariance is positive definite (QDA exists).
    pub fn qda_feasible(&self) -> bool {
        self.s_list.iter().all(|s| cholesky(s).is_ok())
    }
}

pub fn fit_moments(d: &LabeledDataset) -> Result<Moments> {
    let p = d.p();
    let counts = d.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {} has no observations", k + 1)));
    }
    let n = d.n() as f64;
    let mut means = vec![vec![0.0; p]; d.n_classes()];
    for (row, &l) in d.rows().zip(d.labels()) {
        for (m, v) in means[l].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }
    let mut scatter = vec![nalgebra::DMatrix::<f64>::zeros(p, p); d.n_classes()];
    let mut centered = vec![0.0; p];
    for (row, &l) in d.rows().zip(d.labels()) {
        for j in 0..p {
            centered[j] = row[j] - means[l][j];
        }
        let s = &mut scatter[l];
        for b in 0..p {
            for a in 0..=b {
                s[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let s_list = scatter
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| SymMatrix::from_fn(p, |a, b| s[(a, b)] / c as f64))
        .collect();
    Ok(Moments {
        means,
        priors: counts.iter().map(|&c| c as f64 / n).collect(),
        s_list,
        n_list: counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelKind {
    Qda,
    NaiveBayes,
    Drda { lambda: f64 },
    Sqda { lambda: f64 },
}

/// Gaussian class-conditional model scored by the quadratic discriminant
/// `δ_k(x) = ½ logdet Θ_k − ½ (x−μ_k)ᵀ Θ_k (x−μ_k) + log π_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassModel {
    pub kind: ModelKind,
    pub means: Vec<Vec<f64>>,
    pub log_priors: Vec<f64>,
    pub precisions: PrecisionSet,
    pub logdets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl GaussianClassModel {
    pub fn new(
        kind: ModelKind,
        means: Vec<Vec<f64>>,
        log_priors: Vec<f64>,
        precisions: PrecisionSet,
    ) -> Result<Self> {
        let logdets = precisions
            .thetas()
            .iter()
            .enumerate()
            .map(|(k, t)| {
                logdet_pd(t).map_err(|_| Error::not_pd(format!("precision of class {} is not positive definite", k + 1)))
            })
            .collect::<Result<_>>()?;
        let m = GaussianClassModel { kind, means, log_priors, precisions, logdets, feature_names: None };
        m.check_shapes()?;
        Ok(m)
    }

    fn from_moments(kind: ModelKind, moments: &Moments, precisions: PrecisionSet) -> Result<Self> {
        Self::new(kind, moments.means.clone(), moments.log_priors(), precisions)
    }

    pub fn with_feature_names(mut self, names: Option<Vec<String>>) -> Self {
        self.feature_names = names;
        self
    }

    fn check_shapes(&self) -> Result<()> {
        let k = self.precisions.k();
        let p = self.precisions.p();
        if self.means.len() != k || self.log_priors.len() != k || self.logdets.len() != k {
            return Err(Error::invalid("model parameters disagree on the class count"));
        }
        if self.means.iter().any(|m| m.len() != p) {
            return Err(Error::invalid("mean vectors disagree with the precision dimension"));
        }
        if let Some(names) = &self.feature_names {
            if names.len() != p {
                return Err(Error::invalid("feature name count differs from dimension"));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let total: f64 = self.log_priors.iter().map(|l| l.exp()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("class priors sum to {total}")));
        }
        for (k, (t, &ld)) in self.precisions.thetas().iter().zip(&self.logdets).enumerate() {
            let fresh = logdet_pd(t)?;
            if (fresh - ld).abs() > 1e-8 {
                return Err(Error::invalid(format!("cached log-determinant of class {} is stale", k + 1)));
            }
        }
        Ok(())
    }
}

pub fn discriminant_scores(m: &GaussianClassModel, x: &[f64]) -> Result<Vec<f64>> {
    m.check_input(x)?;
    let mut centered = vec![0.0; x.len()];
    Ok((0..m.precisions.k())
        .map(|k| {
            for (c, (xi, mi)) in centered.iter_mut().zip(x.iter().zip(&m.means[k])) {
                *c = xi - mi;
            }
            0.5 * m.logdets[k] - 0.5 * m.precisions.get(k).quadratic_form(&centered) + m.log_priors[k]
        })
        .collect())
}

impl Classifier for GaussianClassModel {
    fn n_features(&self) -> usize {
        self.precisions.p()
    }

    fn n_classes(&self) -> usize {
        self.precisions.k()
    }

    fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(super::log_softmax(&discriminant_scores(self, x)?))
    }

    fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(super::softmax(&discriminant_scores(self, x)?))
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(super::argmax(&discriminant_scores(self, x)?))
    }
}

pub fn fit_qda(d: &LabeledDataset) -> Result<GaussianClassModel> {
    let moments = fit_moments(d)?;
    let thetas = moments
        .s_list
        .iter()
        .enumerate()
        .map(|(k, s)| {
            invert_pd(s).map_err(|_| Error::not_pd(format!("class {}: sample covariance is singular", k + 1)))
        })
        .collect::<Result<_>>()?;
    Ok(GaussianClassModel::from_moments(ModelKind::Qda, &moments, PrecisionSet::new(thetas)?)?
        .with_feature_names(d.feature_names().map(<[String]>::to_vec)))
}

fn diagonal_precisions(moments: &Moments) -> Result<PrecisionSet> {
    let thetas = moments
        .s_list
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let diag = s.diagonal();
            match diag.iter().position(|&v| v <= 0.0) {
                Some(i) => Err(Error::not_pd(format!("class {}: feature {i} has zero variance", k + 1))),
                None => Ok(SymMatrix::from_diagonal(&diag.iter().map(|v| 1.0 / v).collect::<Vec<_>>())),
            }
        })
        .collect::<Result<_>>()?;
    PrecisionSet::new(thetas)
}

/// Gaussian naive Bayes: diagonal precision `1/S_ii` per class.
pub fn fit_naive_bayes(d: &LabeledDataset) -> Result<GaussianClassModel> {
    let moments = fit_moments(d)?;
    Ok(GaussianClassModel::from_moments(ModelKind::NaiveBayes, &moments, diagonal_precisions(&moments)?)?
        .with_feature_names(d.feature_names().map(<[String]>::to_vec)))
}

/// Diagonal-shrinkage RDA: `Σ̂_k = (1−λ)S_k + λ diag(S_k)`, `λ ∈ [0, 1]`.
pub fn fit_drda(d: &LabeledDataset, lambda: f64) -> Result<GaussianClassModel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("DRDA lambda must lie in [0, 1], got {lambda}")));
    }
    let moments = fit_moments(d)?;
    Ok(fit_drda_moments(&moments, lambda)?.with_feature_names(d.feature_names().map(<[String]>::to_vec)))
}

/// DRDA from precomputed moments (shared across a λ grid).
pub fn fit_drda_moments(moments: &Moments, lambda: f64) -> Result<GaussianClassModel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("DRDA lambda must lie in [0, 1], got {lambda}")));
    }
    GaussianClassModel::from_moments(ModelKind::Drda { lambda }, moments, drda_precisions(moments, lambda)?)
}

pub(crate) fn drda_precisions(moments: &Moments, lambda: f64) -> Result<PrecisionSet> {
    if lambda == 1.0 {
        return diagonal_precisions(moments);
    }
    let thetas = moments
        .s_list
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let p = s.dim();
            let blend = SymMatrix::from_fn(p, |i, j| if i == j { s.get(i, i) } else { (1.0 - lambda) * s.get(i, j) });
            invert_pd(&blend).map_err(|_| Error::not_pd(format!("class {}: shrunken covariance is singular", k + 1)))
        })
        .collect::<Result<_>>()?;
    PrecisionSet::new(thetas)
}

/// `P(Θ(λ)) / P(Θ(0))` with `P(Θ) = Σ_{i≠j} ‖θ_ij‖₂`.
pub fn standardized_tuning(theta_lambda: &PrecisionSet, theta_zero: &PrecisionSet) -> Result<f64> {
    let denom = theta_zero.group_penalty();
    if denom <= 0.0 {
        return Err(Error::invalid("reference precision set has no off-diagonal mass"));
    }
    Ok(theta_lambda.group_penalty() / denom)
}

#[derive(Debug, Clone)]
pub struct SqdaFit {
    pub model: GaussianClassModel,
    pub partition: FeaturePartition,
    pub diagnostics: SolveDiagnostics,
}

/// SQDA fits along a λ path on one training set, sharing moments and block cache.
pub struct SqdaPath {
    moments: Moments,
    solver: ScreenedSolver,
    feature_names: Option<Vec<String>>,
}

impl SqdaPath {
    pub fn new(d: &LabeledDataset, cfg: AdmmConfig) -> Result<Self> {
        let moments = fit_moments(d)?;
        let solver = ScreenedSolver::new(&moments.s_list, &moments.n_list, cfg)?;
        Ok(SqdaPath { moments, solver, feature_names: d.feature_names().map(<[String]>::to_vec) })
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn lambda_max(&self) -> f64 {
        self.solver.lambda_max()
    }

    /// `points` log-spaced values from `λ_max` down to `λ_max · ratio`,
    /// plus 0 when QDA is feasible. Ascending.
    pub fn default_grid(&self, points: usize, ratio: f64) -> Vec<f64> {
        let lmax = self.lambda_max();
        let mut grid = Vec::with_capacity(points + 1);
        if self.moments.qda_feasible() {
            grid.push(0.0);
        }
        if lmax > 0.0 && points > 0 {
            let lo = (lmax * ratio).ln();
            let hi = lmax.ln();
            for i in 0..points {
                let t = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
                grid.push((lo + t * (hi - lo)).exp());
            }
        }
        grid
    }

    pub fn fit(&self, lambda: f64) -> Result<SqdaFit> {
        if lambda == 0.0 {
            for (k, s) in self.moments.s_list.iter().enumerate() {
                cholesky(s).map_err(|_| {
                    Error::not_pd(format!(
                        "class {}: sample covariance is singular (n_k = {} for p = {}), QDA is ill-posed",
                        k + 1,
                        self.moments.n_list[k],
                        s.dim()
                    ))
                })?;
            }
        }
        let (precisions, partition, diagnostics) = self.solver.fit(lambda)?;
        let model = GaussianClassModel::from_moments(ModelKind::Sqda { lambda }, &self.moments, precisions)?
            .with_feature_names(self.feature_names.clone());
        Ok(SqdaFit { model, partition, diagnostics })
    }
}

pub fn fit_sqda(d: &LabeledDataset, lambda: f64, cfg: &AdmmConfig) -> Result<GaussianClassModel> {
    Ok(fit_sqda_detailed(d, lambda, cfg)?.model)
}

pub fn fit_sqda_detailed(d: &LabeledDataset, lambda: f64, cfg: &AdmmConfig) -> Result<SqdaFit> {
    SqdaPath::new(d, *cfg)?.fit(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(rng: &mut ChaCha8Rng, n_per: usize, p: usize, k: usize) -> LabeledDataset {
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            let shift: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = (0..p).map(|_| rng.random_range(-0.7..0.7)).collect();
            for _ in 0..n_per {
                let common: f64 = rng.sample(StandardNormal);
                for j in 0..p {
                    let e: f64 = rng.sample(StandardNormal);
                    x.push(shift[j] + e + mix[j] * common);
                }
                labels.push(c);
            }
        }
        LabeledDataset::new(p, x, labels, k).unwrap()
    }

    fn identity_model(k: usize, p: usize) -> GaussianClassModel {
        GaussianClassModel::new(
            ModelKind::Qda,
            vec![vec![0.0; p]; k],
            vec![(1.0 / k as f64).ln(); k],
            PrecisionSet::new(vec![SymMatrix::identity(p); k]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn moments_single_point_and_priors() {
        let d = LabeledDataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 8.0]], vec![0, 1, 1], 2).unwrap();
        let m = fit_moments(&d).unwrap();
        assert_eq!(m.means[0], vec![1.0, 2.0]);
        assert_eq!(m.s_list[0], SymMatrix::zeros(2));
        assert_eq!(m.means[1], vec![4.0, 6.0]);
        // divisor n_k: ((±1)², (±1)(±2), (±2)²) / 2
        assert_eq!(m.s_list[1].to_rows(), vec![vec![1.0, 2.0], vec![2.0, 4.0]]);

        let d = LabeledDataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(fit_moments(&d).unwrap().priors, vec![0.5, 0.5]);

        let d = LabeledDataset::from_rows(&[vec![1.0]], vec![0], 2).unwrap();
        assert!(matches!(fit_moments(&d), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn moments_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = random_dataset(&mut rng, 17, 4, 3);
        let m = fit_moments(&d).unwrap();
        for k in 0..3 {
            let rows: Vec<&[f64]> = d.class_rows(k).into_iter().map(|i| d.row(i)).collect();
            let nk = rows.len() as f64;
            for a in 0..4 {
                let mean_a: f64 = rows.iter().map(|r| r[a]).sum::<f64>() / nk;
                assert!((mean_a - m.means[k][a]).abs() < 1e-12);
                for b in 0..4 {
                    let mean_b: f64 = rows.iter().map(|r| r[b]).sum::<f64>() / nk;
                    let cov: f64 = rows.iter().map(|r| (r[a] - mean_a) * (r[b] - mean_b)).sum::<f64>() / nk;
                    assert!((cov - m.s_list[k].get(a, b)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn discriminant_examples() {
        let m = identity_model(3, 2);
        for s in discriminant_scores(&m, &[0.0, 0.0]).unwrap() {
            assert!((s - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
        let x = [1.5, -2.0];
        for s in discriminant_scores(&m, &x).unwrap() {
            assert!((s - (-0.5 * 6.25 + (1.0f64 / 3.0).ln())).abs() < 1e-14);
        }
        assert!(discriminant_scores(&m, &[1.0]).is_err());
    }

    #[test]
    fn discriminant_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = random_dataset(&mut rng, 30, 3, 2);
        let m = fit_qda(&d).unwrap();
        let x = [0.3, -1.2, 0.8];
        let got = discriminant_scores(&m, &x).unwrap();
        let mom = fit_moments(&d).unwrap();
        for k in 0..2 {
            let s = &mom.s_list[k];
            // Σ⁻¹ via explicit 3×3 adjugate
            let a = |i: usize, j: usize| s.get(i, j);
            let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
            let cof = |i: usize, j: usize| {
                let r: Vec<usize> = (0..3).filter(|&t| t != j).collect();
                let c: Vec<usize> = (0..3).filter(|&t| t != i).collect();
                let minor = a(r[0], c[0]) * a(r[1], c[1]) - a(r[0], c[1]) * a(r[1], c[0]);
                if (i + j).is_multiple_of(2) { minor } else { -minor }
            };
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += (x[i] - mom.means[k][i]) * cof(i, j) / det * (x[j] - mom.means[k][j]);
                }
            }
            let expected = -0.5 * det.ln() - 0.5 * q + mom.priors[k].ln();
            assert!((got[k] - expected).abs() < 1e-10, "{} vs {}", got[k], expected);
        }
    }

    #[test]
    fn tie_breaks_to_first_class() {
        let m = GaussianClassModel::new(
            ModelKind::Qda,
            vec![vec![-1.0], vec![1.0]],
            vec![0.5f64.ln(); 2],
            PrecisionSet::new(vec![SymMatrix::identity(1); 2]).unwrap(),
        )
        .unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 0);
        let post = m.posterior(&[0.0]).unwrap();
        assert_eq!(post, vec![0.5, 0.5]);
        assert_eq!(m.predict(&[-1.0]).unwrap(), 0);
        assert_eq!(m.predict(&[3.0]).unwrap(), 1);
    }

    #[test]
    fn posterior_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = random_dataset(&mut rng, 25, 4, 3);
        let m = fit_qda(&d).unwrap();
        for row in d.rows() {
            let post = m.posterior(row).unwrap();
            assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_ignores_uniform_prior_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let d = random_dataset(&mut rng, 25, 3, 2);
        let m = fit_qda(&d).unwrap();
        let mut shifted = m.clone();
        shifted.log_priors.iter_mut().for_each(|l| *l += 7.25);
        let x = [0.1, 0.2, -0.4];
        let a = softmax(&discriminant_scores(&m, &x).unwrap());
        let b = softmax(&discriminant_scores(&shifted, &x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn drda_limits_and_blend() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let d = random_dataset(&mut rng, 30, 4, 2);
        assert_eq!(fit_drda(&d, 1.0).unwrap().precisions, fit_naive_bayes(&d).unwrap().precisions);
        let q = fit_qda(&d).unwrap();
        let r = fit_drda(&d, 0.0).unwrap();
        for k in 0..2 {
            assert!((q.precisions.get(k).as_dmatrix() - r.precisions.get(k).as_dmatrix()).amax() < 1e-12);
        }
        assert!(fit_drda(&d, 1.5).is_err());

        // S = [[2,1],[1,2]] from points (±1, ±1) arranged to give that covariance
        let s = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let moments = Moments {
            means: vec![vec![0.0; 2]],
            priors: vec![1.0],
            s_list: vec![s],
            n_list: vec![10],
        };
        let th = drda_precisions(&moments, 0.5).unwrap();
        let blend = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let expected = invert_pd(&blend).unwrap();
        assert!((th.get(0).as_dmatrix() - expected.as_dmatrix()).amax() < 1e-15);
    }

    #[test]
    fn sqda_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let d = random_dataset(&mut rng, 40, 4, 2);
        let path = SqdaPath::new(&d, AdmmConfig::default()).unwrap();
        let nb = fit_naive_bayes(&d).unwrap();
        let big = path.fit(path.lambda_max() * 10.0).unwrap().model;
        let tight = AdmmConfig { tol_abs: 1e-10, tol_rel: 1e-9, max_iter: 20_000, ..AdmmConfig::default() };
        let zero = fit_sqda(&d, 0.0, &tight).unwrap();
        let qda = fit_qda(&d).unwrap();
        for row in d.rows() {
            let a = discriminant_scores(&big, row).unwrap();
            let b = discriminant_scores(&nb, row).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-8);
            }
            let a = discriminant_scores(&zero, row).unwrap();
            let b = discriminant_scores(&qda, row).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn sqda_zero_lambda_singular_names_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        // class 2 has fewer points than features
        let mut d = random_dataset(&mut rng, 10, 5, 1);
        let extra = random_dataset(&mut rng, 3, 5, 1);
        d = LabeledDataset::new(
            5,
            [d.values(), extra.values()].concat(),
            [vec![0; 10], vec![1; 3]].concat(),
            2,
        )
        .unwrap();
        let err = fit_sqda(&d, 0.0, &AdmmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(ref m) if m.contains("class 2")), "{err}");
    }

    #[test]
    fn standardized_tuning_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let d = random_dataset(&mut rng, 40, 4, 2);
        let path = SqdaPath::new(&d, AdmmConfig::default()).unwrap();
        let qda = fit_qda(&d).unwrap().precisions;
        let diag = path.fit(path.lambda_max()).unwrap().model.precisions;
        assert_eq!(standardized_tuning(&diag, &qda).unwrap(), 0.0);
        assert_eq!(standardized_tuning(&qda, &qda).unwrap(), 1.0);
        let mid = path.fit(0.3 * path.lambda_max()).unwrap().model.precisions;
        let s = standardized_tuning(&mid, &qda).unwrap();
        assert!(s > 0.0 && s < 1.0, "s = {s}");
        assert!(standardized_tuning(&qda, &diag).is_err());
    }

    #[test]
    fn grid_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let d = random_dataset(&mut rng, 40, 4, 2);
        let path = SqdaPath::new(&d, AdmmConfig::default()).unwrap();
        let g = path.default_grid(20, 1e-3);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert!((g[20] - path.lambda_max()).abs() < 1e-9 * path.lambda_max());
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn model_validation_catches_stale_logdet() {
        let mut m = identity_model(2, 2);
        assert!(m.validate().is_ok());
        m.logdets[0] = 0.5;
        assert!(m.validate().is_err());
    }
}
