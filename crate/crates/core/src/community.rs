//! Community Bayes: rank-based correlation estimates, fused-correlation
//! clustering into feature communities, and per-community posterior
//! combination `Σ_l log p(G=k | X_l) + (1−L) log π_k`.

use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{log_softmax, softmax, Classifier, FittedModel};
use crate::dataset::LabeledDataset;
use crate::datagen::{build_matrix, MatrixModel, TransformSpec};
use crate::error::{Error, Result};
use crate::numerics::SymMatrix;
use crate::screening::{fused_matrix, FeaturePartition, FusedMatrix};

/// Average ranks (1-based) of `v`; ties share the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation between all feature pairs over the rows of
/// class `k`. Ties get average ranks; a constant feature has correlation 0
/// with every other feature.
pub fn spearman_rho(d: &LabeledDataset, k: usize) -> Result<SymMatrix> {
    if k >= d.n_classes() {
        return Err(Error::invalid(format!("class {} does not exist", k + 1)));
    }
    let rows = d.class_rows(k);
    if rows.len() < 2 {
        return Err(Error::invalid(format!("class {} needs at least 2 observations for rank correlation", k + 1)));
    }
    let p = d.p();
    let centered: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|&i| d.row(i)[j]).collect();
            let r = average_ranks(&col);
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let sq_norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>()).collect();
    Ok(SymMatrix::from_fn(p, |i, j| {
        if i == j {
            return 1.0;
        }
        if sq_norms[i] == 0.0 || sq_norms[j] == 0.0 {
            return 0.0;
        }
        let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
        // one square root keeps identical rank vectors at exactly ±1
        (dot / (sq_norms[i] * sq_norms[j]).sqrt()).clamp(-1.0, 1.0)
    }))
}

/// `2 sin(π ρ / 6)` off the diagonal, exactly 1 on it.
pub fn skeptic_transform(rho: &SymMatrix) -> SymMatrix {
    SymMatrix::from_fn(rho.dim(), |i, j| {
        if i == j {
            return 1.0;
        }
        let r = rho.get(i, j);
        // exact at the endpoints
        if r.abs() == 1.0 {
            r
        } else {
            2.0 * (std::f64::consts::PI * r / 6.0).sin()
        }
    })
}

/// Per-class correlation estimates with unit diagonal and entries in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet(Vec<SymMatrix>);

impl CorrelationSet {
    pub fn new(mats: Vec<SymMatrix>) -> Result<Self> {
        let p = mats.first().ok_or_else(|| Error::invalid("empty correlation set"))?.dim();
        for (k, m) in mats.iter().enumerate() {
            if m.dim() != p {
                return Err(Error::invalid("correlation matrices differ in dimension"));
            }
            for j in 0..p {
                if m.get(j, j) != 1.0 {
                    return Err(Error::invalid(format!("class {}: diagonal entry {j} is not 1", k + 1)));
                }
                for i in 0..j {
                    let v = m.get(i, j);
                    if !(-1.0..=1.0).contains(&v) {
                        return Err(Error::invalid(format!("class {}: correlation ({i}, {j}) = {v}", k + 1)));
                    }
                }
            }
        }
        Ok(CorrelationSet(mats))
    }

    /// SKEPTIC estimates `2 sin(π ρ̂/6)` for every class of `d`.
    pub fn estimate(d: &LabeledDataset) -> Result<Self> {
        let mats = (0..d.n_classes()).map(|k| spearman_rho(d, k).map(|r| skeptic_transform(&r))).collect::<Result<_>>()?;
        Self::new(mats)
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.0
    }
}

pub fn fused_correlation(r: &CorrelationSet, n_list: &[usize]) -> Result<FusedMatrix> {
    fused_matrix(r.matrices(), n_list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Average,
    Complete,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slc" | "single" => Ok(Linkage::Single),
            "alc" | "average" => Ok(Linkage::Average),
            "clc" | "complete" => Ok(Linkage::Complete),
            other => Err(Error::invalid(format!("unknown linkage '{other}' (expected slc, alc or clc)"))),
        }
    }
}

/// One agglomeration step. Leaves are nodes `0..p`; merge `m` creates
/// node `p + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Similarity of the two clusters at the time of merging.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Agglomerative clustering on a similarity matrix: the most similar pair
/// of clusters merges first. Cluster similarity is the max (single), mean
/// (average) or min (complete) of the cross-pair similarities. Ties go to
/// the lexicographically smallest pair of clusters, each cluster keyed by
/// its smallest feature index.
pub fn hierarchical_cluster(sim: &FusedMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let p = sim.dim();
    if p == 0 {
        return Err(Error::invalid("cannot cluster zero features"));
    }
    // Slot `i` holds the cluster whose smallest leaf is `i`.
    let mut s: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| sim.get(i, j)).collect()).collect();
    let mut active = vec![true; p];
    let mut node = (0..p).collect::<Vec<_>>();
    let mut size = vec![1usize; p];
    let mut merges = Vec::with_capacity(p.saturating_sub(1));
    for m in 0..p.saturating_sub(1) {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..p).filter(|&i| active[i]) {
            for j in (i + 1..p).filter(|&j| active[j]) {
                if best.is_none_or(|(a, b)| s[i][j] > s[a][b]) {
                    best = Some((i, j));
                }
            }
        }
        let (a, b) = best.expect("two active clusters remain");
        merges.push(Merge { left: node[a].min(node[b]), right: node[a].max(node[b]), height: s[a][b], size: size[a] + size[b] });
        for c in (0..p).filter(|&c| active[c] && c != a && c != b) {
            let v = match linkage {
                Linkage::Single => s[a][c].max(s[b][c]),
                Linkage::Complete => s[a][c].min(s[b][c]),
                Linkage::Average => {
                    (size[a] as f64 * s[a][c] + size[b] as f64 * s[b][c]) / (size[a] + size[b]) as f64
                }
            };
            s[a][c] = v;
            s[c][a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = p + m;
    }
    Ok(Dendrogram { leaves: p, merges })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutRule {
    /// Keep merges with height strictly above the level.
    AtLevel(f64),
    /// Exactly this many communities.
    Into(usize),
}

pub fn cut_dendrogram(dg: &Dendrogram, rule: CutRule) -> Result<FeaturePartition> {
    let p = dg.leaves;
    if dg.merges.len() + 1 != p {
        return Err(Error::invalid("dendrogram must have exactly p − 1 merges"));
    }
    let keep: Box<dyn Fn(usize, &Merge) -> bool> = match rule {
        CutRule::AtLevel(tau) => {
            if !(tau >= 0.0) {
                return Err(Error::invalid(format!("cut level must be non-negative, got {tau}")));
            }
            Box::new(move |_, m| m.height > tau)
        }
        CutRule::Into(l) => {
            if l == 0 || l > p {
                return Err(Error::invalid(format!("community count {l} must lie in 1..={p}")));
            }
            Box::new(move |idx, _| idx < p - l)
        }
    };
    let mut rep: Vec<usize> = (0..p).collect();
    let mut uf = UnionFind::<usize>::new(p);
    for (idx, m) in dg.merges.iter().enumerate() {
        let (a, b) = (rep[m.left], rep[m.right]);
        if keep(idx, m) {
            uf.union(a, b);
        }
        rep.push(a.min(b));
    }
    Ok(FeaturePartition::from_labels(&uf.into_labeling()))
}

/// SKEPTIC correlations per class, fused with class sizes, clustered.
pub fn estimate_dendrogram(d: &LabeledDataset, linkage: Linkage) -> Result<Dendrogram> {
    let r = CorrelationSet::estimate(d)?;
    let fused = fused_correlation(&r, &d.class_counts())?;
    hierarchical_cluster(&fused, linkage)
}

/// Sub-model `l` scores exactly the features of block `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityModel {
    pub partition: FeaturePartition,
    pub sub_models: Vec<FittedModel>,
    pub log_priors: Vec<f64>,
}

impl CommunityModel {
    pub fn community_count(&self) -> usize {
        self.partition.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.partition.is_empty() || self.sub_models.len() != self.partition.len() {
            return Err(Error::invalid("need exactly one sub-model per community"));
        }
        let k = self.log_priors.len();
        let total: f64 = self.log_priors.iter().map(|l| l.exp()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("class priors sum to {total}")));
        }
        for (l, (m, block)) in self.sub_models.iter().zip(self.partition.blocks()).enumerate() {
            m.validate().map_err(|e| Error::InCommunity { community: l, source: Box::new(e) })?;
            if m.n_features() != block.len() || m.n_classes() != k {
                return Err(Error::InCommunity {
                    community: l,
                    source: Box::new(Error::invalid("sub-model shape disagrees with its community")),
                });
            }
        }
        Ok(())
    }

    pub fn per_community_log_posteriors(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut buf = Vec::new();
        self.sub_models
            .iter()
            .zip(self.partition.blocks())
            .map(|(m, block)| {
                buf.clear();
                buf.extend(block.iter().map(|&j| x[j]));
                m.log_posterior(&buf)
            })
            .collect()
    }
}

impl Classifier for CommunityModel {
    fn n_features(&self) -> usize {
        self.partition.dim()
    }

    fn n_classes(&self) -> usize {
        self.log_priors.len()
    }

    fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rows = self.per_community_log_posteriors(x)?;
        Ok(log_softmax(&combined_scores(&rows, &self.log_priors)))
    }
}

fn combined_scores(rows: &[Vec<f64>], log_priors: &[f64]) -> Vec<f64> {
    let correction = 1.0 - rows.len() as f64;
    (0..log_priors.len())
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() + correction * log_priors[k])
        .collect()
}

/// Normalized class probabilities from `L` per-community log-posteriors.
pub fn combine_posteriors(per_community: &[Vec<f64>], log_priors: &[f64], l: usize) -> Result<Vec<f64>> {
    if per_community.len() != l || l == 0 {
        return Err(Error::invalid(format!("expected {l} community rows, got {}", per_community.len())));
    }
    let k = log_priors.len();
    for (i, row) in per_community.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid(format!("community {i} has {} classes, expected {k}", row.len())));
        }
        let total: f64 = row.iter().map(|v| v.exp()).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("community {i} posterior sums to {total}")));
        }
    }
    Ok(softmax(&combined_scores(per_community, log_priors)))
}

/// Fits `base` on each community's columns (in parallel) and stores the
/// empirical class log-priors.
pub fn fit_community_model<F>(d: &LabeledDataset, partition: &FeaturePartition, base: F) -> Result<CommunityModel>
where
    F: Fn(&LabeledDataset) -> Result<FittedModel> + Sync,
{
    if partition.dim() != d.p() {
        return Err(Error::invalid(format!(
            "partition covers {} features, data has {}",
            partition.dim(),
            d.p()
        )));
    }
    if d.is_empty() {
        return Err(Error::invalid("cannot fit a community model to an empty dataset"));
    }
    let sub_models = partition
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(l, block)| base(&d.select_features(block)).map_err(|e| Error::InCommunity { community: l, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    let n = d.n() as f64;
    let log_priors = d.class_counts().iter().map(|&c| (c as f64 / n).ln()).collect();
    Ok(CommunityModel { partition: partition.clone(), sub_models, log_priors })
}

/// Parameters of the partition-recovery experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub p: usize,
    pub l_true: usize,
    pub k: usize,
    pub n_per_class: usize,
    /// Within-community correlation of the latent Gaussian.
    pub separation: f64,
    pub reps: usize,
    pub linkage: Linkage,
    pub seed: u64,
}

/// Nonparanormal sample with `l_true` equicorrelated blocks. Class `k`
/// uses marginal transform identity / power(3) / Gaussian CDF cyclically.
pub fn block_nonparanormal_sample(cfg: &ConsistencyConfig, seed: u64) -> Result<LabeledDataset> {
    let sigma = build_matrix(MatrixModel::Blocks { rho: cfg.separation, count: cfg.l_true }, cfg.p)?;
    let transforms = [
        TransformSpec::Identity,
        TransformSpec::Power { alpha: 3.0 },
        TransformSpec::GaussianCdf { mu: 0.0, sigma: 1.0 },
    ];
    let mut x = Vec::with_capacity(cfg.k * cfg.n_per_class * cfg.p);
    let mut labels = Vec::with_capacity(cfg.k * cfg.n_per_class);
    for c in 0..cfg.k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        let z = crate::datagen::sample_class_rng(cfg.n_per_class, &vec![0.0; cfg.p], &sigma, &mut rng)?;
        x.extend(crate::datagen::apply_transform(&z, cfg.p, &transforms[c % 3])?);
        labels.extend(std::iter::repeat_n(c, cfg.n_per_class));
    }
    LabeledDataset::new(cfg.p, x, labels, cfg.k)
}

/// Fraction of replications (seed `cfg.seed + r`) in which
/// spearman → skeptic → fuse → cluster → cut into `l_true` recovers the
/// generating partition exactly.
pub fn community_consistency_experiment(cfg: &ConsistencyConfig) -> Result<f64> {
    if cfg.p == 0 || cfg.l_true == 0 || cfg.l_true > cfg.p || cfg.k == 0 || cfg.n_per_class < 2 || cfg.reps == 0 {
        return Err(Error::invalid("consistency experiment needs positive sizes with l_true ≤ p and n ≥ 2"));
    }
    let truth = FeaturePartition::from_labels(&crate::datagen::block_labels(cfg.p, cfg.l_true));
    let hits = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let d = block_nonparanormal_sample(cfg, cfg.seed.wrapping_add(r as u64))?;
            let dg = estimate_dendrogram(&d, cfg.linkage)?;
            Ok(cut_dendrogram(&dg, CutRule::Into(cfg.l_true))? == truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / cfg.reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit_naive_bayes, Classifier};
    use crate::screening::threshold_components;
    use proptest::prelude::*;
    use rand::Rng;

    fn fused(rows: &[Vec<f64>]) -> FusedMatrix {
        FusedMatrix::from_similarity(SymMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn spearman_examples() {
        let rows = vec![
            vec![1.0, 1.0, -1.0, 2.0],
            vec![2.0, 2.0, -2.0, 1.0],
            vec![3.0, 3.0, -3.0, 2.0],
            vec![4.0, 4.0, -4.0, 5.0],
            vec![5.0, 5.0, -5.0, 4.0],
        ];
        let d = LabeledDataset::from_rows(&rows, vec![0; 5], 1).unwrap();
        let r = spearman_rho(&d, 0).unwrap();
        assert_eq!(r.get(0, 1), 1.0);
        assert_eq!(r.get(0, 2), -1.0);
        // column 3 ranks with one tie: (1.5, 1.5... ) computed by hand:
        // values (2,1,2,5,4) → ranks (2.5, 1, 2.5, 5, 4); col 0 ranks (1..5)
        // centered: a = (-2,-1,0,1,2), b = (-0.5,-2,-0.5,2,1)
        // a·b = 1 + 2 + 0 + 2 + 2 = 7; |a|² = 10; |b|² = 0.25+4+0.25+4+1 = 9.5
        let expected = 7.0 / (10.0f64 * 9.5).sqrt();
        assert!((r.get(0, 3) - expected).abs() < 1e-15);
        assert_eq!(r.get(3, 3), 1.0);

        let d1 = LabeledDataset::from_rows(&rows[..1], vec![0], 1).unwrap();
        assert!(spearman_rho(&d1, 0).is_err());
        let flat = LabeledDataset::from_rows(&[vec![1.0, 3.0], vec![1.0, 4.0]], vec![0, 0], 1).unwrap();
        assert_eq!(spearman_rho(&flat, 0).unwrap().get(0, 1), 0.0);
    }

    #[test]
    fn skeptic_examples() {
        let rho = SymMatrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 1.0], vec![0.5, 1.0, 1.0]]).unwrap();
        let r = skeptic_transform(&rho);
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(1, 2), 1.0);
        assert!((r.get(0, 2) - 0.517_638_090_205_041_5).abs() < 1e-12);
        assert_eq!(r.diagonal(), vec![1.0; 3]);
    }

    proptest! {
        #[test]
        fn skeptic_odd_and_increasing(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let f = |v: f64| skeptic_transform(&SymMatrix::from_rows(&[vec![1.0, v], vec![v, 1.0]]).unwrap()).get(0, 1);
            prop_assert_eq!(f(-a), -f(a));
            if a < b {
                prop_assert!(f(a) < f(b));
            }
            prop_assert!(f(a).abs() <= 1.0);
        }
    }

    #[test]
    fn fused_correlation_examples() {
        let r = |v: f64| SymMatrix::from_rows(&[vec![1.0, v], vec![v, 1.0]]).unwrap();
        let one = CorrelationSet::new(vec![r(0.3)]).unwrap();
        assert!((fused_correlation(&one, &[10]).unwrap().get(0, 1) - 3.0).abs() < 1e-12);
        let two = CorrelationSet::new(vec![r(0.3), r(0.4)]).unwrap();
        assert!((fused_correlation(&two, &[7, 7]).unwrap().get(0, 1) - 3.5).abs() < 1e-12);
        let zero = CorrelationSet::new(vec![r(0.0), r(0.0)]).unwrap();
        assert_eq!(fused_correlation(&zero, &[5, 9]).unwrap().get(0, 1), 0.0);
        assert!(CorrelationSet::new(vec![r(1.5)]).is_err());
    }

    #[test]
    fn clustering_examples() {
        let two = fused(&[vec![0.0, 0.7], vec![0.7, 0.0]]);
        let dg = hierarchical_cluster(&two, Linkage::Single).unwrap();
        assert_eq!(dg.merges, vec![Merge { left: 0, right: 1, height: 0.7, size: 2 }]);

        let three = fused(&[vec![0.0, 0.9, 0.1], vec![0.9, 0.0, 0.1], vec![0.1, 0.1, 0.0]]);
        for linkage in [Linkage::Single, Linkage::Average, Linkage::Complete] {
            let dg = hierarchical_cluster(&three, linkage).unwrap();
            assert_eq!((dg.merges[0].left, dg.merges[0].right), (0, 1));
            assert_eq!(dg.merges[0].height, 0.9);
            assert_eq!((dg.merges[1].left, dg.merges[1].right), (2, 3));
            assert!((dg.merges[1].height - 0.1).abs() < 1e-15);
        }

        let blocks = fused(&[
            vec![0.0, 0.5, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.8],
            vec![0.0, 0.0, 0.8, 0.0],
        ]);
        for linkage in [Linkage::Single, Linkage::Average, Linkage::Complete] {
            assert_eq!(hierarchical_cluster(&blocks, linkage).unwrap().merges.last().unwrap().height, 0.0);
        }
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let s = fused(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]);
        let dg = hierarchical_cluster(&s, Linkage::Average).unwrap();
        assert_eq!((dg.merges[0].left, dg.merges[0].right), (0, 1));
    }

    #[test]
    fn linkage_values() {
        // 0,1 merge first; then similarity of {0,1} to 2 is max/mean/min of (0.2, 0.6)
        let s = fused(&[vec![0.0, 0.9, 0.2], vec![0.9, 0.0, 0.6], vec![0.2, 0.6, 0.0]]);
        let h = |l| hierarchical_cluster(&s, l).unwrap().merges[1].height;
        assert_eq!(h(Linkage::Single), 0.6);
        assert!((h(Linkage::Average) - 0.4).abs() < 1e-15);
        assert_eq!(h(Linkage::Complete), 0.2);
    }

    #[test]
    fn cut_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p = 7;
        let s = FusedMatrix::from_similarity(SymMatrix::from_fn(p, |_, _| rng.random::<f64>())).unwrap();
        let dg = hierarchical_cluster(&s, Linkage::Average).unwrap();
        assert_eq!(cut_dendrogram(&dg, CutRule::Into(1)).unwrap(), FeaturePartition::single_block(p));
        assert_eq!(cut_dendrogram(&dg, CutRule::Into(p)).unwrap(), FeaturePartition::singletons(p));
        for l in 1..=p {
            assert_eq!(cut_dendrogram(&dg, CutRule::Into(l)).unwrap().len(), l);
        }
        assert!(cut_dendrogram(&dg, CutRule::Into(0)).is_err());
        assert!(cut_dendrogram(&dg, CutRule::Into(p + 1)).is_err());
        assert!(cut_dendrogram(&dg, CutRule::AtLevel(-1.0)).is_err());
    }

    #[test]
    fn single_linkage_cut_equals_thresholding() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..50 {
            let p = rng.random_range(2..12);
            // coarse values so that ties occur
            let s = FusedMatrix::from_similarity(SymMatrix::from_fn(p, |_, _| (rng.random::<f64>() * 6.0).floor())).unwrap();
            let dg = hierarchical_cluster(&s, Linkage::Single).unwrap();
            for tau in [0.0, 1.0, 2.5, 4.0, 5.0] {
                assert_eq!(cut_dendrogram(&dg, CutRule::AtLevel(tau)).unwrap(), threshold_components(&s, tau));
            }
        }
    }

    #[test]
    fn combine_examples() {
        let out = combine_posteriors(&[vec![0.8f64.ln(), 0.2f64.ln()], vec![0.6f64.ln(), 0.4f64.ln()]], &[0.5f64.ln(); 2], 2).unwrap();
        assert!((out[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!((out[1] - 1.0 / 7.0).abs() < 1e-12);

        let row = vec![0.7f64.ln(), 0.1f64.ln(), 0.2f64.ln()];
        let out = combine_posteriors(std::slice::from_ref(&row), &[0.2f64.ln(); 3], 1).unwrap();
        for (a, b) in out.iter().zip(&row) {
            assert!((a - b.exp()).abs() < 1e-12);
        }

        let prior = vec![0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let out = combine_posteriors(&vec![prior.clone(); 4], &prior, 4).unwrap();
        for (a, b) in out.iter().zip(&prior) {
            assert!((a - b.exp()).abs() < 1e-12);
        }
        assert!(combine_posteriors(std::slice::from_ref(&row), &[0.2f64.ln(); 3], 2).is_err());
        assert!(combine_posteriors(&[vec![0.0, 0.0, 0.0]], &[0.2f64.ln(); 3], 1).is_err());
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> LabeledDataset {
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        LabeledDataset::new(p, x, labels, k).unwrap()
    }

    fn random_partition(rng: &mut ChaCha8Rng, p: usize) -> FeaturePartition {
        let l = rng.random_range(1..=p);
        FeaturePartition::from_labels(&(0..p).map(|_| rng.random_range(0..l)).collect::<Vec<_>>())
    }

    #[test]
    fn naive_bayes_factorizes_over_any_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let (p, k) = (rng.random_range(2..8), rng.random_range(2..4));
            let d = random_dataset(&mut rng, 40, p, k);
            let part = random_partition(&mut rng, p);
            let cm = fit_community_model(&d, &part, |s| Ok(fit_naive_bayes(s)?.into())).unwrap();
            let nb = fit_naive_bayes(&d).unwrap();
            for row in d.rows().take(10) {
                for (a, b) in cm.posterior(row).unwrap().iter().zip(nb.posterior(row).unwrap()) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn single_community_matches_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let d = random_dataset(&mut rng, 30, 3, 2);
        let cm = fit_community_model(&d, &FeaturePartition::single_block(3), |s| Ok(crate::classifiers::fit_qda(s)?.into())).unwrap();
        assert_eq!(cm.sub_models.len(), 1);
        let q = crate::classifiers::fit_qda(&d).unwrap();
        for row in d.rows() {
            for (a, b) in cm.posterior(row).unwrap().iter().zip(q.posterior(row).unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn community_errors_are_annotated() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut d = random_dataset(&mut rng, 6, 3, 2);
        // make feature 2 constant within class 1 so NB fails on community 1
        d = d.map_values(|j, v| if j == 2 { 1.0 } else { v });
        let part = FeaturePartition::new(vec![vec![0, 1], vec![2]]).unwrap();
        let err = fit_community_model(&d, &part, |s| Ok(fit_naive_bayes(s)?.into())).unwrap_err();
        assert!(matches!(err, Error::InCommunity { community: 1, .. }), "{err}");
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let d = random_dataset(&mut rng, 30, 4, 2);
        let part = FeaturePartition::new(vec![vec![0, 3], vec![1, 2]]).unwrap();
        let cm = fit_community_model(&d, &part, |s| Ok(fit_naive_bayes(s)?.into())).unwrap();
        let model: FittedModel = cm.into();
        let back = FittedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn consistency_trivial_and_degenerate() {
        let cfg = ConsistencyConfig {
            p: 6,
            l_true: 6,
            k: 2,
            n_per_class: 30,
            separation: 0.0,
            reps: 3,
            linkage: Linkage::Average,
            seed: 1,
        };
        assert_eq!(community_consistency_experiment(&cfg).unwrap(), 1.0);
        let rate = community_consistency_experiment(&ConsistencyConfig { l_true: 2, ..cfg }).unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }

    #[test]
    fn partition_recovery_is_permutation_equivariant() {
        let cfg = ConsistencyConfig {
            p: 9,
            l_true: 3,
            k: 2,
            n_per_class: 100,
            separation: 0.6,
            reps: 1,
            linkage: Linkage::Average,
            seed: 3,
        };
        let d = block_nonparanormal_sample(&cfg, 3).unwrap();
        let part = cut_dendrogram(&estimate_dendrogram(&d, Linkage::Average).unwrap(), CutRule::Into(3)).unwrap();
        let perm = [4, 7, 0, 8, 2, 5, 1, 6, 3];
        let permuted = d.select_features(&perm);
        let got = cut_dendrogram(&estimate_dendrogram(&permuted, Linkage::Average).unwrap(), CutRule::Into(3)).unwrap();
        // feature j of the permuted data is feature perm[j] of the original
        let mapped = FeaturePartition::new(
            got.blocks().iter().map(|b| b.iter().map(|&j| perm[j]).collect()).collect(),
        )
        .unwrap();
        assert_eq!(mapped, part);
    }
}
