//! Group graphical lasso over `K` classes, solved by ADMM.
//!
//! The estimate maximizes
//!
//! ```text
//! Σ_k n_k (log det Θ⁽ᵏ⁾ − tr(S⁽ᵏ⁾ Θ⁽ᵏ⁾)) − λ Σ_{i≠j} ‖θ_ij‖₂
//! ```
//!
//! where `θ_ij = (θ⁽¹⁾_ij, …, θ⁽ᴷ⁾_ij)` and the penalty runs over *ordered*
//! pairs, so every unordered pair is charged `2λ‖θ_ij‖₂`.
//!
//! ADMM splits `Θ = Z` with scaled dual `U`. Internally the objective is
//! divided by `N = Σ n_k`, which leaves the optimum unchanged and keeps `ρ`
//! on a scale independent of the sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, PartialFit, Result};
use crate::numerics::{eig_sym, invert_pd, logdet_pd, SymMatrix};
use crate::screening::fused_matrix;

/// `K` precision matrices over one shared feature indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSet {
    thetas: Vec<SymMatrix>,
}

impl PrecisionSet {
    pub fn new(thetas: Vec<SymMatrix>) -> Result<Self> {
        let p = thetas
            .first()
            .ok_or_else(|| Error::invalid("precision set needs at least one class"))?
            .dim();
        if thetas.iter().any(|t| t.dim() != p) {
            return Err(Error::invalid("precision matrices differ in dimension"));
        }
        Ok(PrecisionSet { thetas })
    }

    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].dim()
    }

    pub fn thetas(&self) -> &[SymMatrix] {
        &self.thetas
    }

    pub fn into_thetas(self) -> Vec<SymMatrix> {
        self.thetas
    }

    pub fn get(&self, k: usize) -> &SymMatrix {
        &self.thetas[k]
    }

    /// `θ_ij` across classes.
    pub fn group(&self, i: usize, j: usize) -> GroupVector {
        GroupVector(self.thetas.iter().map(|t| t.get(i, j)).collect())
    }

    /// `Σ_{i≠j} ‖θ_ij‖₂` over ordered pairs.
    pub fn group_penalty(&self) -> f64 {
        let p = self.p();
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..j {
                acc += self.group(i, j).norm();
            }
        }
        2.0 * acc
    }

    /// Unordered pairs `(i, j)`, `i < j`, whose group is not identically zero.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let p = self.p();
        let mut out = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if self.thetas.iter().any(|t| t.get(i, j) != 0.0) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// The values of one `(i, j)` entry across all `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVector(pub Vec<f64>);

impl GroupVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Proximal operator of `t‖·‖₂`: `(1 − t/‖v‖₂)₊ · v`.
pub fn group_soft_threshold(v: &GroupVector, t: f64) -> GroupVector {
    let mut out = v.clone();
    shrink_in_place(&mut out.0, t);
    out
}

fn shrink_in_place(v: &mut [f64], t: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let scale = 1.0 - t / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Initial augmented-Lagrangian penalty.
    pub rho: f64,
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Double or halve `rho` when one residual exceeds the other tenfold.
    pub rho_adapt: bool,
    /// Once the residual tests pass, iteration continues until the
    /// optimality-condition residual of `Z` is at most this value.
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
}

fn default_kkt_tol() -> f64 {
    1e-4
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            max_iter: 500,
            tol_abs: 1e-6,
            tol_rel: 1e-4,
            rho_adapt: true,
            kkt_tol: default_kkt_tol(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0 && self.kkt_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_residual: f64,
    pub objective: f64,
}

/// `Σ_k n_k(logdet Θ⁽ᵏ⁾ − tr(S⁽ᵏ⁾Θ⁽ᵏ⁾)) − λ Σ_{i≠j} ‖θ_ij‖₂`.
pub fn penalized_objective(
    thetas: &PrecisionSet,
    s_list: &[SymMatrix],
    n_list: &[usize],
    lambda: f64,
) -> Result<f64> {
    check_problem(s_list, n_list)?;
    if thetas.k() != s_list.len() || thetas.p() != s_list[0].dim() {
        return Err(Error::invalid("precision set does not match covariance list"));
    }
    let mut acc = 0.0;
    for (k, (theta, s)) in thetas.thetas().iter().zip(s_list).enumerate() {
        let ld = logdet_pd(theta).map_err(|_| Error::not_pd(format!("precision of class {}", k + 1)))?;
        acc += n_list[k] as f64 * (ld - s.trace_product(theta));
    }
    Ok(acc - lambda * thetas.group_penalty())
}

/// Per-class ADMM subproblem: the unique PD minimizer of
/// `−n·logdet Θ + n·tr(SΘ) + (ρ/2)‖Θ − A‖²_F`.
///
/// With `ρA − nS = V·diag(d)·Vᵀ` the minimizer is `V·diag(θ)·Vᵀ` where
/// `θ_j = (d_j + √(d_j² + 4ρn)) / (2ρ)`. For negative `d_j` the equivalent
/// form `2n / (√(d_j² + 4ρn) − d_j)` avoids cancellation when `ρ` is small.
pub fn theta_update(s: &SymMatrix, n: f64, a: &SymMatrix, rho: f64) -> Result<SymMatrix> {
    let rhs = a.lin_comb(rho, s, -n);
    let eig = eig_sym(&rhs)?;
    Ok(eig.reconstruct_with(|d| {
        let root = (d * d + 4.0 * rho * n).sqrt();
        if d >= 0.0 {
            (d + root) / (2.0 * rho)
        } else {
            2.0 * n / (root - d)
        }
    }))
}

pub(crate) fn check_problem(s_list: &[SymMatrix], n_list: &[usize]) -> Result<()> {
    if s_list.is_empty() {
        return Err(Error::invalid("need at least one class"));
    }
    if s_list.len() != n_list.len() {
        return Err(Error::invalid(format!(
            "{} covariance matrices but {} class counts",
            s_list.len(),
            n_list.len()
        )));
    }
    let p = s_list[0].dim();
    if s_list.iter().any(|s| s.dim() != p) {
        return Err(Error::invalid("covariance matrices differ in dimension"));
    }
    if let Some(k) = n_list.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {} has no observations", k + 1)));
    }
    if let Some(k) = s_list.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("covariance of class {} is not finite", k + 1)));
    }
    Ok(())
}

fn check_diagonals(s_list: &[SymMatrix]) -> Result<()> {
    for (k, s) in s_list.iter().enumerate() {
        if let Some(i) = s.diagonal().iter().position(|&d| d <= 0.0) {
            return Err(Error::not_pd(format!(
                "class {}: feature {i} has zero variance",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Closed-form solution when no group survives: `Θ⁽ᵏ⁾ = diag(1/S⁽ᵏ⁾_ii)`.
pub(crate) fn diagonal_solution(s_list: &[SymMatrix]) -> PrecisionSet {
    PrecisionSet {
        thetas: s_list
            .iter()
            .map(|s| SymMatrix::from_diagonal(&s.diagonal().iter().map(|d| 1.0 / d).collect::<Vec<_>>()))
            .collect(),
    }
}

/// Solves the group graphical lasso by ADMM and returns the sparse `Z` iterate.
///
/// Two cases are solved in closed form: `λ = 0` gives `S⁻¹` per class, and
/// `λ` at least the largest fused off-diagonal entry gives the diagonal
/// solution `1/S_ii`.
pub fn fit_group_graphical_lasso(
    s_list: &[SymMatrix],
    n_list: &[usize],
    lambda: f64,
    cfg: &AdmmConfig,
) -> Result<(PrecisionSet, SolveDiagnostics)> {
    check_problem(s_list, n_list)?;
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    check_diagonals(s_list)?;
    let fused = fused_matrix(s_list, n_list)?;
    let closed_form = if lambda == 0.0 {
        // Unpenalized: the classes decouple and each optimum is S⁻¹.
        let thetas = s_list
            .iter()
            .enumerate()
            .map(|(k, s)| {
                invert_pd(s).map_err(|_| {
                    Error::not_pd(format!(
                        "class {}: sample covariance is singular, the unpenalized fit does not exist",
                        k + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(PrecisionSet { thetas })
    } else if lambda >= fused.max_entry() {
        Some(diagonal_solution(s_list))
    } else {
        None
    };
    if let Some(thetas) = closed_form {
        let objective = penalized_objective(&thetas, s_list, n_list, lambda)?;
        let kkt = kkt_residual(&thetas, s_list, n_list, lambda)?;
        let diag = SolveDiagnostics {
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            kkt_residual: kkt,
            objective,
        };
        return Ok((thetas, diag));
    }

    Admm::new(s_list, n_list, lambda, cfg).run()
}

const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;

struct Admm<'a> {
    s_list: &'a [SymMatrix],
    n_list: &'a [usize],
    weights: Vec<f64>,
    lambda: f64,
    /// `λ / N`, the penalty weight of the normalized problem.
    scaled_lambda: f64,
    cfg: &'a AdmmConfig,
}

impl<'a> Admm<'a> {
    fn new(s_list: &'a [SymMatrix], n_list: &'a [usize], lambda: f64, cfg: &'a AdmmConfig) -> Self {
        let total: f64 = n_list.iter().map(|&n| n as f64).sum();
        Admm {
            s_list,
            n_list,
            weights: n_list.iter().map(|&n| n as f64 / total).collect(),
            lambda,
            scaled_lambda: lambda / total,
            cfg,
        }
    }

    fn run(&self) -> Result<(PrecisionSet, SolveDiagnostics)> {
        let k_count = self.s_list.len();
        let p = self.s_list[0].dim();
        let mut rho = self.cfg.rho;

        let mut z: Vec<SymMatrix> = diagonal_solution(self.s_list).into_thetas();
        let mut u: Vec<SymMatrix> = vec![SymMatrix::zeros(p); k_count];
        let mut theta: Vec<SymMatrix>;
        let sqrt_n = ((k_count * p * p) as f64).sqrt();

        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        for iter in 1..=self.cfg.max_iter {
            theta = (0..k_count)
                .map(|k| {
                    let a = z[k].lin_comb(1.0, &u[k], -1.0);
                    theta_update(&self.s_list[k], self.weights[k], &a, rho)
                })
                .collect::<Result<_>>()?;

            let z_old = std::mem::replace(&mut z, self.z_update(&theta, &u, rho));

            let mut r2 = 0.0;
            let mut s2 = 0.0;
            let (mut theta_n, mut z_n, mut u_n) = (0.0, 0.0, 0.0);
            for k in 0..k_count {
                let resid = theta[k].lin_comb(1.0, &z[k], -1.0);
                r2 += resid.frobenius_norm().powi(2);
                s2 += z[k].lin_comb(1.0, &z_old[k], -1.0).frobenius_norm().powi(2);
                u[k] = u[k].lin_comb(1.0, &resid, 1.0);
                theta_n += theta[k].frobenius_norm().powi(2);
                z_n += z[k].frobenius_norm().powi(2);
                u_n += u[k].frobenius_norm().powi(2);
            }
            primal = r2.sqrt();
            dual = rho * s2.sqrt();
            let eps_pri = sqrt_n * self.cfg.tol_abs + self.cfg.tol_rel * theta_n.sqrt().max(z_n.sqrt());
            let eps_dual = sqrt_n * self.cfg.tol_abs + self.cfg.tol_rel * rho * u_n.sqrt();

            if primal <= eps_pri && dual <= eps_dual {
                let candidate = PrecisionSet { thetas: z };
                if let Ok(kkt) = kkt_residual(&candidate, self.s_list, self.n_list, self.lambda) {
                    if kkt <= self.cfg.kkt_tol {
                        return self.finish(candidate, kkt, iter, primal, dual);
                    }
                }
                z = candidate.into_thetas();
            }

            if self.cfg.rho_adapt {
                // U is scaled by 1/ρ, so it moves opposite to ρ.
                if primal > 10.0 * dual && rho < RHO_MAX {
                    rho *= 2.0;
                    u.iter_mut().for_each(|m| *m = m.lin_comb(0.5, m, 0.0));
                } else if dual > 10.0 * primal && rho > RHO_MIN {
                    rho *= 0.5;
                    u.iter_mut().for_each(|m| *m = m.lin_comb(2.0, m, 0.0));
                }
            }
        }

        let iterations = self.cfg.max_iter;
        let thetas = PrecisionSet { thetas: z };
        let objective = penalized_objective(&thetas, self.s_list, self.n_list, self.lambda).unwrap_or(f64::NAN);
        let kkt = kkt_residual(&thetas, self.s_list, self.n_list, self.lambda).unwrap_or(f64::NAN);
        Err(Error::MaxIterationsExceeded {
            iterations,
            partial: Box::new(PartialFit::GroupLasso {
                thetas,
                diagnostics: SolveDiagnostics {
                    iterations,
                    primal_residual: primal,
                    dual_residual: dual,
                    kkt_residual: kkt,
                    objective,
                },
            }),
        })
    }

    /// Diagonal entries are copied; each off-diagonal group of `Θ + U` is
    /// shrunk by `λ/ρ` (normalized units). The ordered-pair penalty charges
    /// `2λ` per unordered pair, and the Frobenius term counts both `(i,j)`
    /// and `(j,i)`, so the factors of two cancel.
    fn z_update(&self, theta: &[SymMatrix], u: &[SymMatrix], rho: f64) -> Vec<SymMatrix> {
        let k_count = theta.len();
        let p = theta[0].dim();
        let mut z: Vec<SymMatrix> = (0..k_count).map(|k| theta[k].lin_comb(1.0, &u[k], 1.0)).collect();
        let t = self.scaled_lambda / rho;
        let mut group = vec![0.0; k_count];
        for j in 0..p {
            for i in 0..j {
                for k in 0..k_count {
                    group[k] = z[k].get(i, j);
                }
                shrink_in_place(&mut group, t);
                for k in 0..k_count {
                    z[k].set(i, j, group[k]);
                }
            }
        }
        z
    }

    fn finish(
        &self,
        thetas: PrecisionSet,
        kkt: f64,
        iterations: usize,
        primal: f64,
        dual: f64,
    ) -> Result<(PrecisionSet, SolveDiagnostics)> {
        let objective = penalized_objective(&thetas, self.s_list, self.n_list, self.lambda)?;
        Ok((
            thetas,
            SolveDiagnostics {
                iterations,
                primal_residual: primal,
                dual_residual: dual,
                kkt_residual: kkt,
                objective,
            },
        ))
    }
}

/// Largest violation of the optimality conditions at `thetas`.
///
/// With `W⁽ᵏ⁾ = (Θ⁽ᵏ⁾)⁻¹` and `g_ij = (n_k(W⁽ᵏ⁾_ij − S⁽ᵏ⁾_ij))_k`:
/// nonzero groups need `g_ij = λ θ_ij/‖θ_ij‖₂`, zero groups need
/// `‖g_ij‖₂ ≤ λ`, and diagonals need `W_ii = S_ii`.
pub fn kkt_residual(
    thetas: &PrecisionSet,
    s_list: &[SymMatrix],
    n_list: &[usize],
    lambda: f64,
) -> Result<f64> {
    check_problem(s_list, n_list)?;
    let w: Vec<SymMatrix> = thetas
        .thetas()
        .iter()
        .enumerate()
        .map(|(k, t)| invert_pd(t).map_err(|_| Error::not_pd(format!("precision of class {}", k + 1))))
        .collect::<Result<_>>()?;
    let k_count = thetas.k();
    let p = thetas.p();
    let mut worst = 0.0_f64;
    for i in 0..p {
        for k in 0..k_count {
            worst = worst.max((w[k].get(i, i) - s_list[k].get(i, i)).abs());
        }
    }
    let mut g = vec![0.0; k_count];
    for j in 0..p {
        for i in 0..j {
            for k in 0..k_count {
                g[k] = n_list[k] as f64 * (w[k].get(i, j) - s_list[k].get(i, j));
            }
            let theta = thetas.group(i, j);
            let theta_norm = theta.norm();
            let contribution = if theta_norm > 0.0 {
                g.iter()
                    .zip(&theta.0)
                    .map(|(gk, tk)| (gk - lambda * tk / theta_norm).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                (g.iter().map(|x| x * x).sum::<f64>().sqrt() - lambda).max(0.0)
            };
            worst = worst.max(contribution);
        }
    }
    Ok(worst)
}
