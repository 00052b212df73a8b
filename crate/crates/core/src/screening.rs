//! Exact covariance thresholding.
//!
//! Connected components of the estimated concentration graph at `λ` are
//! exactly the connected components of the graph with edges
//! `S̃_ij > λ`, where `S̃_ij = ‖(n₁S⁽¹⁾_ij, …, n_K S⁽ᴷ⁾_ij)‖₂`. The full
//! problem therefore splits into independent per-block problems.

use std::collections::HashMap;
use std::sync::Mutex;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SymMatrix;
use crate::solver::{
    check_problem, fit_group_graphical_lasso, kkt_residual, penalized_objective, AdmmConfig,
    PrecisionSet, SolveDiagnostics,
};

/// Symmetric matrix of `‖(n_k M⁽ᵏ⁾_ij)_k‖₂`, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMatrix(SymMatrix);

impl FusedMatrix {
    /// Wraps a similarity matrix. Entries must be finite and non-negative;
    /// the diagonal is zeroed.
    pub fn from_similarity(mut m: SymMatrix) -> Result<Self> {
        let p = m.dim();
        for j in 0..p {
            for i in 0..j {
                let v = m.get(i, j);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("similarity ({i}, {j}) = {v} must be finite and non-negative")));
                }
            }
            m.set(j, j, 0.0);
        }
        Ok(FusedMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    /// Largest off-diagonal entry; 0 when `p = 1`.
    pub fn max_entry(&self) -> f64 {
        self.0.max_abs()
    }

    /// Off-diagonal entries of the upper triangle.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let p = self.dim();
        let mut v = Vec::with_capacity(p * (p - 1) / 2);
        for j in 0..p {
            for i in 0..j {
                v.push(self.get(i, j));
            }
        }
        v
    }
}

/// Builds the fused matrix from per-class matrices (covariances or correlations).
pub fn fused_matrix(mats: &[SymMatrix], n_list: &[usize]) -> Result<FusedMatrix> {
    if mats.is_empty() || mats.len() != n_list.len() {
        return Err(Error::invalid("fused_matrix needs one count per class matrix"));
    }
    let p = mats[0].dim();
    if mats.iter().any(|m| m.dim() != p) {
        return Err(Error::invalid("class matrices differ in dimension"));
    }
    Ok(FusedMatrix(SymMatrix::from_fn(p, |i, j| {
        if i == j {
            return 0.0;
        }
        mats.iter()
            .zip(n_list)
            .map(|(m, &n)| (n as f64 * m.get(i, j)).powi(2))
            .sum::<f64>()
            .sqrt()
    })))
}

/// Disjoint cover of `{0, …, p−1}` by non-empty blocks.
///
/// Stored in canonical form: each block sorted ascending, blocks ordered by
/// their smallest member. Two partitions are equal as set partitions iff
/// they compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct FeaturePartition {
    blocks: Vec<Vec<usize>>,
}

impl FeaturePartition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let p: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; p];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::invalid("partition contains an empty block"));
            }
            for &i in b {
                if i >= p || seen[i] {
                    return Err(Error::invalid(format!(
                        "blocks do not form a partition of 0..{p} (index {i})"
                    )));
                }
                seen[i] = true;
            }
        }
        blocks.iter_mut().for_each(|b| b.sort_unstable());
        blocks.sort_by_key(|b| b[0]);
        Ok(FeaturePartition { blocks })
    }

    /// Builds from per-feature component labels (any integers).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            map.entry(l).or_default().push(i);
        }
        let blocks: Vec<Vec<usize>> = map.into_values().collect();
        FeaturePartition::new(blocks).expect("labels always induce a partition")
    }

    pub fn singletons(p: usize) -> Self {
        FeaturePartition { blocks: (0..p).map(|i| vec![i]).collect() }
    }

    pub fn single_block(p: usize) -> Self {
        FeaturePartition { blocks: vec![(0..p).collect()] }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every feature.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (l, b) in self.blocks.iter().enumerate() {
            for &i in b {
                out[i] = l;
            }
        }
        out
    }

    /// True when every block of `self` lies inside some block of `coarser`.
    pub fn refines(&self, coarser: &FeaturePartition) -> bool {
        if self.dim() != coarser.dim() {
            return false;
        }
        let outer = coarser.labels();
        self.blocks.iter().all(|b| b.iter().all(|&i| outer[i] == outer[b[0]]))
    }

    /// Relabels features through `perm` (feature `i` becomes `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> FeaturePartition {
        FeaturePartition::new(
            self.blocks.iter().map(|b| b.iter().map(|&i| perm[i]).collect()).collect(),
        )
        .expect("a permutation maps partitions to partitions")
    }
}

impl TryFrom<Vec<Vec<usize>>> for FeaturePartition {
    type Error = Error;
    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        FeaturePartition::new(blocks)
    }
}

impl From<FeaturePartition> for Vec<Vec<usize>> {
    fn from(p: FeaturePartition) -> Self {
        p.blocks
    }
}

/// Components of the graph with edge `(i, j)` iff `edge(i, j)`.
pub(crate) fn components(p: usize, mut edge: impl FnMut(usize, usize) -> bool) -> FeaturePartition {
    let mut uf = UnionFind::<usize>::new(p);
    for j in 0..p {
        for i in 0..j {
            if edge(i, j) {
                uf.union(i, j);
            }
        }
    }
    FeaturePartition::from_labels(&uf.into_labeling())
}

/// Components of the graph with edges `S̃_ij > λ` (strict).
pub fn threshold_components(f: &FusedMatrix, lambda: f64) -> FeaturePartition {
    components(f.dim(), |i, j| f.get(i, j) > lambda)
}

/// Components of the estimated concentration graph (nonzero groups).
pub fn support_components(thetas: &PrecisionSet) -> FeaturePartition {
    components(thetas.p(), |i, j| thetas.thetas().iter().any(|t| t.get(i, j) != 0.0))
}

/// Solves the group graphical lasso block by block after thresholding.
pub fn fit_with_screening(
    s_list: &[SymMatrix],
    n_list: &[usize],
    lambda: f64,
    cfg: &AdmmConfig,
) -> Result<(PrecisionSet, FeaturePartition, SolveDiagnostics)> {
    ScreenedSolver::new(s_list, n_list, *cfg)?.fit(lambda)
}

type BlockKey = (Vec<usize>, u64);

/// Screened solver over one data set, caching block solutions across a λ path.
pub struct ScreenedSolver {
    s_list: Vec<SymMatrix>,
    n_list: Vec<usize>,
    cfg: AdmmConfig,
    fused: FusedMatrix,
    cache: Mutex<HashMap<BlockKey, (Vec<SymMatrix>, SolveDiagnostics)>>,
}

impl ScreenedSolver {
    pub fn new(s_list: &[SymMatrix], n_list: &[usize], cfg: AdmmConfig) -> Result<Self> {
        check_problem(s_list, n_list)?;
        cfg.validate()?;
        let fused = fused_matrix(s_list, n_list)?;
        Ok(ScreenedSolver {
            s_list: s_list.to_vec(),
            n_list: n_list.to_vec(),
            cfg,
            fused,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn s_list(&self) -> &[SymMatrix] {
        &self.s_list
    }

    pub fn n_list(&self) -> &[usize] {
        &self.n_list
    }

    pub fn fused(&self) -> &FusedMatrix {
        &self.fused
    }

    /// Smallest λ giving the all-diagonal solution.
    pub fn lambda_max(&self) -> f64 {
        self.fused.max_entry()
    }

    pub fn fit(&self, lambda: f64) -> Result<(PrecisionSet, FeaturePartition, SolveDiagnostics)> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        let partition = threshold_components(&self.fused, lambda);
        let p = self.fused.dim();
        let k_count = self.s_list.len();

        let solved: Vec<(Vec<SymMatrix>, SolveDiagnostics)> = partition
            .blocks()
            .par_iter()
            .enumerate()
            .map(|(l, block)| {
                self.solve_block(block, lambda).map_err(|e| Error::InBlock { block: l, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;

        let mut full: Vec<SymMatrix> = vec![SymMatrix::zeros(p); k_count];
        let mut iterations = 0;
        let mut primal = 0.0_f64;
        let mut dual = 0.0_f64;
        for (block, (thetas, d)) in partition.blocks().iter().zip(&solved) {
            for (k, t) in thetas.iter().enumerate() {
                for (a, &i) in block.iter().enumerate() {
                    for (b, &j) in block.iter().enumerate().take(a + 1) {
                        full[k].set(i, j, t.get(a, b));
                    }
                }
            }
            iterations = iterations.max(d.iterations);
            primal = primal.max(d.primal_residual);
            dual = dual.max(d.dual_residual);
        }
        let thetas = PrecisionSet::new(full)?;
        let diagnostics = SolveDiagnostics {
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            kkt_residual: kkt_residual(&thetas, &self.s_list, &self.n_list, lambda)?,
            objective: penalized_objective(&thetas, &self.s_list, &self.n_list, lambda)?,
        };
        Ok((thetas, partition, diagnostics))
    }

    fn solve_block(&self, block: &[usize], lambda: f64) -> Result<(Vec<SymMatrix>, SolveDiagnostics)> {
        if block.len() == 1 {
            let i = block[0];
            let thetas = self
                .s_list
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let v = s.get(i, i);
                    if v > 0.0 {
                        Ok(SymMatrix::from_diagonal(&[1.0 / v]))
                    } else {
                        Err(Error::not_pd(format!("class {}: feature {i} has zero variance", k + 1)))
                    }
                })
                .collect::<Result<_>>()?;
            return Ok((thetas, SolveDiagnostics::default()));
        }
        let key = (block.to_vec(), lambda.to_bits());
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let sub: Vec<SymMatrix> = self.s_list.iter().map(|s| s.submatrix(block)).collect();
        let (thetas, d) = fit_group_graphical_lasso(&sub, &self.n_list, lambda, &self.cfg)?;
        let value = (thetas.into_thetas(), d);
        self.cache.lock().expect("cache poisoned").insert(key, value.clone());
        Ok(value)
    }
}
