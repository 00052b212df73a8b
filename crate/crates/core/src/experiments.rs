//! Model families as grid trainers, the simulation benchmarks and the
//! spam-style LR vs CLR pipeline.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    fit_drda_moments, fit_logistic_regression, fit_moments, fit_naive_bayes, fit_qda, standardized_tuning,
    Classifier, GaussianClassModel, LogisticConfig, Moments, SqdaPath,
};
use crate::community::{cut_dendrogram, estimate_dendrogram, fit_community_model, CommunityModel, CutRule, Dendrogram, Linkage};
use crate::datagen::{generate, ClassSpec, MatrixModel, MatrixRole, MeanDenominator, SimulationSpec, TransformSpec};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::io::{read_labeled_csv, Preprocessing};
use crate::model_selection::{classifier_error, cv_select, holdout_protocol, mean_sd, Grid, PathTrainer};
use crate::solver::{AdmmConfig, PrecisionSet};

/// SQDA along a λ grid, sharing moments and screened block solutions.
pub struct SqdaTrainer {
    pub cfg: AdmmConfig,
}

impl PathTrainer for SqdaTrainer {
    type Model = GaussianClassModel;
    type Path = SqdaPath;

    fn prepare(&self, train: &LabeledDataset) -> Result<SqdaPath> {
        SqdaPath::new(train, self.cfg)
    }

    fn fit(&self, path: &SqdaPath, lambda: f64) -> Result<GaussianClassModel> {
        Ok(path.fit(lambda)?.model)
    }
}

/// Default SQDA grid: 20 log-spaced values from `λ_max` to `λ_max·1e-3`,
/// plus 0 when every class covariance is nonsingular.
pub fn sqda_grid(d: &LabeledDataset, cfg: AdmmConfig) -> Result<Grid> {
    let path = SqdaPath::new(d, cfg)?;
    Grid::new(path.default_grid(20, 1e-3))
}

pub struct DrdaTrainer;

impl PathTrainer for DrdaTrainer {
    type Model = GaussianClassModel;
    type Path = Moments;

    fn prepare(&self, train: &LabeledDataset) -> Result<Moments> {
        fit_moments(train)
    }

    fn fit(&self, moments: &Moments, lambda: f64) -> Result<GaussianClassModel> {
        fit_drda_moments(moments, lambda)
    }
}

/// `0, 0.05, …, 1`.
pub fn drda_grid() -> Grid {
    Grid::new((0..=20).map(|i| i as f64 / 20.0).collect()).expect("static grid")
}

/// Community logistic regression indexed by the number of communities.
/// The dendrogram is estimated once per training set.
pub struct ClrTrainer {
    pub linkage: Linkage,
    pub logistic: LogisticConfig,
}

impl PathTrainer for ClrTrainer {
    type Model = CommunityModel;
    type Path = (LabeledDataset, Dendrogram);

    fn prepare(&self, train: &LabeledDataset) -> Result<Self::Path> {
        Ok((train.clone(), estimate_dendrogram(train, self.linkage)?))
    }

    fn fit(&self, (train, dg): &Self::Path, l: f64) -> Result<CommunityModel> {
        if l < 1.0 || l.fract() != 0.0 {
            return Err(Error::invalid(format!("community count must be a positive integer, got {l}")));
        }
        let partition = cut_dendrogram(dg, CutRule::Into(l as usize))?;
        let cfg = self.logistic;
        fit_community_model(train, &partition, |d| Ok(fit_logistic_regression(d, &cfg)?.into()))
    }
}

/// Scores by misclassification error.
pub fn error_scorer<M: Classifier>(m: &M, d: &LabeledDataset) -> Result<f64> {
    classifier_error(m, d)
}

/// `P(Θ)/P(Θ_QDA)` when the QDA precisions are available.
fn tuning_ratio(theta: &PrecisionSet, qda: Option<&PrecisionSet>) -> Option<f64> {
    qda.and_then(|q| standardized_tuning(theta, q).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub test_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardized_tuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communities: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub methods: Vec<MethodResult>,
}

impl Replication {
    pub fn error(&self, method: &str) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.test_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mean_s: Option<f64>,
    pub mean_communities: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub experiment: String,
    pub rows: Vec<TableRow>,
    pub replications: Vec<Replication>,
}

impl BenchmarkTable {
    fn from_replications(experiment: &str, replications: Vec<Replication>) -> Self {
        let methods: Vec<String> = replications.first().map(|r| r.methods.iter().map(|m| m.method.clone()).collect()).unwrap_or_default();
        let rows = methods
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let col: Vec<&MethodResult> = replications.iter().map(|r| &r.methods[i]).collect();
                let errors: Vec<f64> = col.iter().map(|m| m.test_error).collect();
                let (mean_error, sd_error) = mean_sd(&errors);
                let mean_of = |v: Vec<Option<f64>>| -> Option<f64> {
                    let v: Option<Vec<f64>> = v.into_iter().collect();
                    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
                };
                TableRow {
                    method: name.clone(),
                    mean_error,
                    sd_error,
                    mean_s: mean_of(col.iter().map(|m| m.standardized_tuning).collect()),
                    mean_communities: mean_of(col.iter().map(|m| m.communities.map(|c| c as f64)).collect()),
                }
            })
            .collect();
        BenchmarkTable { experiment: experiment.to_string(), rows, replications }
    }

    pub fn row(&self, method: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,mean_error,sd_error,mean_s,mean_communities`; blank where not applicable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean_error,sd_error,mean_s,mean_communities\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                r.method,
                r.mean_error,
                r.sd_error,
                opt(r.mean_s),
                opt(r.mean_communities)
            );
        }
        out
    }
}

/// Test errors of SQDA, DRDA (both tuned on the validation set), QDA and
/// naive Bayes for one simulated replication.
pub fn sqda_replication(spec: &SimulationSpec, cfg: AdmmConfig) -> Result<Replication> {
    let data = generate(spec)?;
    let (train, valid, test) = (&data.train, &data.validation, &data.test);
    let qda = fit_qda(train).ok();
    let qda_theta = qda.as_ref().map(|m| &m.precisions);

    let sqda = holdout_protocol(train, valid, test, &sqda_grid(train, cfg)?, &SqdaTrainer { cfg }, error_scorer)?;
    let drda = holdout_protocol(train, valid, test, &drda_grid(), &DrdaTrainer, error_scorer)?;
    let test_error = |m: &GaussianClassModel| classifier_error(m, test);

    let mut methods = vec![
        MethodResult {
            method: "SQDA".into(),
            test_error: sqda.test_error.ok_or_else(|| Error::invalid("empty test set"))?,
            chosen: Some(sqda.chosen),
            standardized_tuning: tuning_ratio(&sqda.model.precisions, qda_theta),
            communities: None,
        },
        MethodResult {
            method: "DRDA".into(),
            test_error: drda.test_error.ok_or_else(|| Error::invalid("empty test set"))?,
            chosen: Some(drda.chosen),
            standardized_tuning: tuning_ratio(&drda.model.precisions, qda_theta),
            communities: None,
        },
    ];
    let qda = qda.ok_or_else(|| Error::not_pd("QDA is undefined: a class covariance is singular"))?;
    methods.push(MethodResult { method: "QDA".into(), test_error: test_error(&qda)?, chosen: None, standardized_tuning: None, communities: None });
    let nb = fit_naive_bayes(train)?;
    methods.push(MethodResult { method: "NB".into(), test_error: test_error(&nb)?, chosen: None, standardized_tuning: None, communities: None });
    Ok(Replication { seed: spec.seed, methods })
}

/// LR on all features vs CLR with the community count chosen on the
/// validation set from `1..=p`.
pub fn clr_replication(spec: &SimulationSpec, linkage: Linkage, logistic: LogisticConfig) -> Result<Replication> {
    let data = generate(spec)?;
    let (train, valid, test) = (&data.train, &data.validation, &data.test);
    let lr = fit_logistic_regression(train, &logistic)?;
    let grid = Grid::counts(train.p())?;
    let clr = holdout_protocol(train, valid, test, &grid, &ClrTrainer { linkage, logistic }, error_scorer)?;
    Ok(Replication {
        seed: spec.seed,
        methods: vec![
            MethodResult { method: "LR".into(), test_error: classifier_error(&lr, test)?, chosen: None, standardized_tuning: None, communities: None },
            MethodResult {
                method: "CLR".into(),
                test_error: clr.test_error.ok_or_else(|| Error::invalid("empty test set"))?,
                chosen: Some(clr.chosen),
                standardized_tuning: None,
                communities: Some(clr.model.community_count()),
            },
        ],
    })
}

/// Settings of the spam-style pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamConfig {
    pub log_offset: f64,
    pub subsample: usize,
    pub train_size: usize,
    pub folds: usize,
    pub max_communities: usize,
    pub linkage: Linkage,
    pub logistic: LogisticConfig,
}

impl Default for SpamConfig {
    fn default() -> Self {
        SpamConfig {
            log_offset: 0.1,
            subsample: 1000,
            train_size: 500,
            folds: 5,
            max_communities: 20,
            linkage: Linkage::Average,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamReport {
    pub lr_error: f64,
    pub clr_error: f64,
    pub communities: usize,
    /// Mean CV error for `L = 1, 2, …`.
    pub cv_curve: Vec<Option<f64>>,
}

/// `log(x + offset)`, a seeded random subsample split into train and test,
/// LR on all features vs CLR with `L` chosen by stratified CV.
pub fn spam_pipeline(d: &LabeledDataset, cfg: &SpamConfig, seed: u64) -> Result<SpamReport> {
    if cfg.subsample > d.n() || cfg.train_size >= cfg.subsample {
        return Err(Error::invalid(format!(
            "need train size < subsample ≤ {} rows (got {} and {})",
            d.n(),
            cfg.train_size,
            cfg.subsample
        )));
    }
    let pre = Preprocessing { log_offset: Some(cfg.log_offset), average_groups: None, input_features: d.p() };
    let d = pre.apply(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample(&mut rng, d.n(), cfg.subsample).into_vec();
    let train = d.subset(&idx[..cfg.train_size]);
    let test = d.subset(&idx[cfg.train_size..]);
    let lr = fit_logistic_regression(&train, &cfg.logistic)?;
    let grid = Grid::counts(cfg.max_communities.min(d.p()))?;
    let cv = cv_select(&train, &grid, cfg.folds, seed, &ClrTrainer { linkage: cfg.linkage, logistic: cfg.logistic }, error_scorer)?;
    Ok(SpamReport {
        lr_error: classifier_error(&lr, &test)?,
        clr_error: classifier_error(&cv.model, &test)?,
        communities: cv.model.community_count(),
        cv_curve: cv.candidates.iter().map(|c| c.mean).collect(),
    })
}

/// A named benchmark.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Sqda(SimulationSpec),
    Clr(SimulationSpec),
    Spam(PathBuf),
}

fn sqda_spec(model: fn(f64) -> MatrixModel, p: usize, n: usize) -> SimulationSpec {
    let class = |rho| ClassSpec { model: model(rho), role: MatrixRole::Precision, transform: TransformSpec::Identity };
    SimulationSpec {
        p,
        classes: vec![class(0.0), class(0.8)],
        mean_denominator: MeanDenominator::P,
        n_train: n,
        n_valid: n,
        n_test: 10_000,
        seed: 0,
    }
}

fn clr_spec(model: MatrixModel, nonnormal: bool) -> SimulationSpec {
    let transforms = if nonnormal {
        [TransformSpec::Identity, TransformSpec::Power { alpha: 3.0 }, TransformSpec::GaussianCdf { mu: 0.0, sigma: 1.0 }]
    } else {
        [TransformSpec::Identity; 3]
    };
    SimulationSpec {
        p: 16,
        classes: transforms.iter().map(|&transform| ClassSpec { model, role: MatrixRole::Covariance, transform }).collect(),
        mean_denominator: MeanDenominator::HalfP,
        n_train: 20,
        n_valid: 20,
        n_test: 10_000,
        seed: 0,
    }
}

pub const EXPERIMENT_NAMES: &[&str] = &[
    "example1",
    "example1-decreasing",
    "example2-p8",
    "example2-p20",
    "example2-p40",
    "example2-p100",
    "clr-example1",
    "clr-example1-full",
    "clr-example1-decreasing",
    "clr-example1-block2",
    "clr-example1-block4",
    "clr-example1-block8",
    "clr-example2",
    "clr-example2-full",
    "clr-example2-decreasing",
    "clr-example2-block2",
    "clr-example2-block4",
    "clr-example2-block8",
    "spam",
];

/// Resolves an experiment name. `spam` needs the corpus CSV in `data`.
pub fn experiment(name: &str, data: Option<PathBuf>) -> Result<Experiment> {
    let block = |rho| MatrixModel::Block { rho, q: 4 };
    let exp = match name {
        "example1" => Experiment::Sqda(sqda_spec(|rho| MatrixModel::Full { rho }, 8, 50)),
        "example1-decreasing" => Experiment::Sqda(sqda_spec(|rho| MatrixModel::Decreasing { rho }, 8, 50)),
        "example2-p8" => Experiment::Sqda(sqda_spec(block, 8, 50)),
        "example2-p20" => Experiment::Sqda(sqda_spec(block, 20, 200)),
        "example2-p40" => Experiment::Sqda(sqda_spec(block, 40, 800)),
        "example2-p100" => Experiment::Sqda(sqda_spec(block, 100, 1500)),
        "spam" => Experiment::Spam(data.ok_or_else(|| Error::invalid("the spam benchmark needs --data <corpus.csv>"))?),
        other => {
            let (example, variant) = other
                .strip_prefix("clr-example")
                .and_then(|rest| rest.split_at_checked(1))
                .ok_or_else(|| unknown_experiment(name))?;
            let nonnormal = match example {
                "1" => false,
                "2" => true,
                _ => return Err(unknown_experiment(name)),
            };
            let model = match variant {
                "" | "-block4" => MatrixModel::Blocks { rho: 0.5, count: 4 },
                "-full" => MatrixModel::Full { rho: 0.5 },
                "-decreasing" => MatrixModel::Decreasing { rho: 0.5 },
                "-block2" => MatrixModel::Blocks { rho: 0.5, count: 2 },
                "-block8" => MatrixModel::Blocks { rho: 0.5, count: 8 },
                _ => return Err(unknown_experiment(name)),
            };
            Experiment::Clr(clr_spec(model, nonnormal))
        }
    };
    Ok(exp)
}

fn unknown_experiment(name: &str) -> Error {
    Error::invalid(format!("unknown experiment '{name}' (known: {})", EXPERIMENT_NAMES.join(", ")))
}

/// Runs `reps` replications (seed `seed + r`) concurrently on the current
/// rayon pool; rows are ordered by replication index.
pub fn run_benchmark(name: &str, exp: &Experiment, reps: usize, seed: u64) -> Result<BenchmarkTable> {
    if reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let seeds: Vec<u64> = (0..reps as u64).map(|r| seed.wrapping_add(r)).collect();
    let replications = match exp {
        Experiment::Sqda(spec) => seeds
            .par_iter()
            .map(|&s| sqda_replication(&spec.with_seed(s), AdmmConfig::default()))
            .collect::<Result<Vec<_>>>()?,
        Experiment::Clr(spec) => seeds
            .par_iter()
            .map(|&s| clr_replication(&spec.with_seed(s), Linkage::Average, LogisticConfig::default()))
            .collect::<Result<Vec<_>>>()?,
        Experiment::Spam(path) => {
            let d = read_labeled_csv(path, None)?;
            let cfg = SpamConfig::default();
            seeds
                .par_iter()
                .map(|&s| {
                    let r = spam_pipeline(&d, &cfg, s)?;
                    Ok(Replication {
                        seed: s,
                        methods: vec![
                            MethodResult { method: "LR".into(), test_error: r.lr_error, chosen: None, standardized_tuning: None, communities: None },
                            MethodResult {
                                method: "CLR".into(),
                                test_error: r.clr_error,
                                chosen: Some(r.communities as f64),
                                standardized_tuning: None,
                                communities: Some(r.communities),
                            },
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(BenchmarkTable::from_replications(name, replications))
}
