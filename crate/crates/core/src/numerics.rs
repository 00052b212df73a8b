//! Dense symmetric linear algebra.
//!
//! [`SymMatrix`] is a thin newtype over a column-major `nalgebra::DMatrix`
//! that keeps both triangles in sync. Eigendecomposition is delegated to
//! nalgebra's symmetric QR algorithm; the Cholesky-based helpers
//! (`logdet_pd`, `invert_pd`) report failure as
//! [`Error::NotPositiveDefinite`].

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry of user-supplied matrices.
const SYMMETRY_RTOL: f64 = 1e-10;

/// A dense symmetric `p × p` matrix with `p ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        assert!(!d.is_empty(), "dimension must be positive");
        let mut m = DMatrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        SymMatrix(m)
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle (`i ≤ j`).
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(p);
        for j in 0..p {
            for i in 0..=j {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from row vectors. The input must be square and symmetric up to
    /// a relative tolerance; the stored matrix is the exact symmetrization.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::invalid(format!(
                "row {bad} has length {}, expected {p}",
                rows[bad].len()
            )));
        }
        let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
        Self::from_dmatrix(m)
    }

    /// Wraps a square matrix after checking symmetry.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::invalid(format!(
                "expected a non-empty square matrix, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = max_abs(&m).max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    continue;
                }
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages `m` with its transpose. No symmetry check.
    pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let p = self.dim();
        (0..p).all(|j| (0..j).all(|i| self.get(i, j) == 0.0))
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            self.0[(idx[a], idx[b])]
        }))
    }

    /// `tr(self · other)` for symmetric arguments, i.e. `Σ_ij a_ij b_ij`.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.dot(&other.0)
    }

    /// `vᵀ · self · v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let p = self.dim();
        debug_assert_eq!(v.len(), p);
        let mut acc = 0.0;
        for j in 0..p {
            let col = self.0.column(j);
            let mut s = 0.0;
            for i in 0..p {
                s += col[i] * v[i];
            }
            acc += s * v[j];
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        SymMatrix(&self.0 * a + &other.0 * b)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V · diag(f(values)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for i in 0..p {
                scaled[(i, j)] *= fv;
            }
        }
        SymMatrix::symmetrize(scaled * self.vectors.transpose())
    }
}

pub fn eig_sym(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::invalid("eig_sym: matrix has non-finite entries"));
    }
    let eig = m.0.clone().symmetric_eigen();
    let p = m.dim();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Lower Cholesky factor `L` with `L·Lᵀ = m`.
pub fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    if !m.is_finite() {
        return Err(Error::invalid("cholesky: matrix has non-finite entries"));
    }
    nalgebra::Cholesky::new(m.0.clone())
        .map(|c| c.unpack())
        .ok_or_else(|| Error::not_pd(format!("{0}×{0} matrix has a non-positive pivot", m.dim())))
}

pub fn logdet_pd(m: &SymMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn invert_pd(m: &SymMatrix) -> Result<SymMatrix> {
    if !m.is_finite() {
        return Err(Error::invalid("invert_pd: matrix has non-finite entries"));
    }
    let chol = nalgebra::Cholesky::new(m.0.clone())
        .ok_or_else(|| Error::not_pd(format!("{0}×{0} matrix has a non-positive pivot", m.dim())))?;
    Ok(SymMatrix::symmetrize(chol.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
        SymMatrix::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(p, p) * 0.1)
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / a.amax().max(1e-300)
    }

    #[test]
    fn eig_of_identity_and_diagonal() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);

        let e = eig_sym(&SymMatrix::from_diagonal(&[5.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![2.0, 5.0]);
        // axis aligned, up to sign
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_sym(&mut rng, 4);
            let e = eig_sym(&m).unwrap();
            let back = e.reconstruct_with(|v| v);
            assert!(rel_err(m.as_dmatrix(), back.as_dmatrix()) < 1e-10);
            let vtv = e.vectors.transpose() * &e.vectors;
            assert!((vtv - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(eig_sym(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymMatrix::identity(2)).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2));

        let m = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert_eq!(l[(0, 1)], 0.0);
        assert!(rel_err(m.as_dmatrix(), &(&l * l.transpose())) < 1e-10);

        let bad = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_pd(&SymMatrix::identity(5)).unwrap(), 0.0);
        let d = logdet_pd(&SymMatrix::from_diagonal(&[2.0, 3.0])).unwrap();
        assert!((d - 6f64.ln()).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = random_spd(&mut rng, 4);
            let via_eig: f64 = eig_sym(&m).unwrap().values.iter().map(|v| v.ln()).sum();
            assert!((logdet_pd(&m).unwrap() - via_eig).abs() < 1e-10);
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_pd(&SymMatrix::identity(3)).unwrap(), SymMatrix::identity(3));
        let inv = invert_pd(&SymMatrix::from_diagonal(&[2.0, 4.0])).unwrap();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = random_spd(&mut rng, 5);
            let prod = m.as_dmatrix() * invert_pd(&m).unwrap().as_dmatrix();
            assert!((prod - DMatrix::<f64>::identity(5, 5)).amax() < 1e-8);
        }
    }

    #[test]
    fn logdet_of_inverse_is_negated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_spd(&mut rng, 6);
            let a = logdet_pd(&m).unwrap();
            let b = logdet_pd(&invert_pd(&m).unwrap()).unwrap();
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn cholesky_exists_iff_eigenvalues_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut seen = (0, 0);
        for _ in 0..100 {
            let p = rng.random_range(2..6);
            // shift a random symmetric matrix so roughly half are PD
            let mut m = random_sym(&mut rng, p);
            let shift = rng.random_range(0.0..2.0);
            for i in 0..p {
                m.set(i, i, m.get(i, i) + shift);
            }
            let min_eig = eig_sym(&m).unwrap().values[0];
            if min_eig.abs() < 1e-9 {
                continue;
            }
            let pd = min_eig > 0.0;
            assert_eq!(cholesky(&m).is_ok(), pd);
            if pd {
                seen.0 += 1;
            } else {
                seen.1 += 1;
            }
        }
        assert!(seen.0 > 10 && seen.1 > 10);
    }

    #[test]
    fn from_rows_rejects_asymmetry() {
        let r = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let r = SymMatrix::from_rows(&[vec![1.0, 2.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn quadratic_form_and_trace() {
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(m.quadratic_form(&[1.0, 2.0]), 2.0 + 4.0 + 12.0);
        assert_eq!(m.trace_product(&SymMatrix::identity(2)), 5.0);
    }
}
