use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use sqda::classifiers::{
    fit_drda, fit_logistic_regression, fit_naive_bayes, fit_qda, fit_sqda_detailed, standardized_tuning,
    LogisticConfig,
};
use sqda::community::{cut_dendrogram, estimate_dendrogram, fit_community_model, CutRule, Linkage};
use sqda::datagen::{generate, SimulationSpec, RNG_NAME};
use sqda::experiments::{
    drda_grid, error_scorer, experiment, run_benchmark, sqda_grid, ClrTrainer, DrdaTrainer, Experiment, SqdaTrainer,
};
use sqda::io::{
    format_value, read_column_groups, read_features_csv, read_labeled_csv, read_text, require_dir,
    write_labeled_csv, write_text, Preprocessing,
};
use sqda::model_selection::{classifier_error, cv_select, Grid, PathTrainer, SelectionSummary};
use sqda::solver::SolveDiagnostics;
use sqda::{AdmmConfig, Classifier, FittedModel, LabeledDataset};

use crate::config::{load, parse_list, require};
use crate::{CliError, CliResult};

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                // a closed pipe (e.g. `| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(sqda::Error::Io { path: "<stdout>".into(), source: e }.into())
                }
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(sqda::Error::from)? + "\n")
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named design (example1, example2-p8, clr-example1-block4, ...).
    #[arg(long)]
    experiment: Option<String>,
    /// Manifest of an earlier run, or a hand-written one.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Existing output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of the design.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    experiment: Option<String>,
    spec: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

/// Everything needed to regenerate a simulated data set.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub spec: SimulationSpec,
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let m: Manifest =
        toml::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if m.generator != RNG_NAME {
        return Err(CliError::Usage(format!(
            "{}: generator '{}' is not supported (expected '{RNG_NAME}')",
            path.display(),
            m.generator
        )));
    }
    Ok(m)
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let c: SimulateConfig = load(a.config.as_deref())?;
    let out = require(a.out.or(c.out), "out")?;
    let mut manifest = match (a.experiment.or(c.experiment), a.spec.or(c.spec)) {
        (Some(name), None) => match experiment(&name, None)? {
            Experiment::Sqda(spec) | Experiment::Clr(spec) => {
                Manifest { generator: RNG_NAME.into(), experiment: Some(name), spec }
            }
            Experiment::Spam(_) => return Err(CliError::Usage("the spam benchmark has no simulation design".into())),
        },
        (None, Some(path)) => read_manifest(&path)?,
        _ => return Err(CliError::Usage("give exactly one of --experiment and --spec".into())),
    };
    if let Some(seed) = a.seed.or(c.seed) {
        manifest.spec.seed = seed;
    }
    let dir = require_dir(&out)?;
    let data = generate(&manifest.spec)?;
    write_labeled_csv(dir.join("train.csv"), &data.train)?;
    write_labeled_csv(dir.join("validation.csv"), &data.validation)?;
    write_labeled_csv(dir.join("test.csv"), &data.test)?;
    let text = toml::to_string(&manifest).map_err(|e| CliError::Usage(format!("cannot encode manifest: {e}")))?;
    write_text(dir.join("manifest.toml"), &text)?;
    eprintln!(
        "wrote {} / {} / {} rows to {}",
        data.train.n(),
        data.validation.n(),
        data.test.n(),
        dir.display()
    );
    Ok(())
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sqda,
    Qda,
    Nb,
    Drda,
    Lr,
    Clr,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Labeled training CSV (final column `label`, classes 1..K).
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit report (JSON); printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Penalty for sqda, shrinkage in [0, 1] for drda.
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of communities for clr.
    #[arg(long)]
    communities: Option<usize>,
    /// Choose the tuning parameter by stratified cross-validation.
    #[arg(long)]
    cv: bool,
    /// Number of cross-validation folds (default 5).
    #[arg(long)]
    folds: Option<usize>,
    /// Candidate values, comma separated; defaults depend on the kind.
    #[arg(long)]
    grid: Option<String>,
    /// Largest community count tried by clr cross-validation.
    #[arg(long)]
    max_communities: Option<usize>,
    /// slc, alc or clc.
    #[arg(long)]
    linkage: Option<String>,
    /// Transform every feature to ln(x + offset) before fitting.
    #[arg(long)]
    log_offset: Option<f64>,
    /// Column-group file; each line lists 1-based columns to average.
    #[arg(long)]
    avg_cols: Option<PathBuf>,
    /// Seed of the fold assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap for the ADMM and logistic solvers.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Ridge penalty of the logistic fits.
    #[arg(long)]
    ridge: Option<f64>,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    train: Option<PathBuf>,
    kind: Option<Kind>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    lambda: Option<f64>,
    communities: Option<usize>,
    cv: Option<bool>,
    folds: Option<usize>,
    grid: Option<Vec<f64>>,
    max_communities: Option<usize>,
    linkage: Option<String>,
    log_offset: Option<f64>,
    avg_cols: Option<PathBuf>,
    seed: Option<u64>,
    max_iter: Option<usize>,
    ridge: Option<f64>,
}

/// A fitted model together with the preprocessing its inputs need.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub preprocessing: Preprocessing,
    pub model: FittedModel,
}

const MODEL_FORMAT: &str = "sqda-model-1";

#[derive(Debug, Serialize)]
struct FitReport {
    kind: Kind,
    train: PathBuf,
    n: usize,
    p: usize,
    classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    communities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    standardized_tuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolveDiagnostics>,
    training_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<SelectionSummary>,
    wall_time_seconds: f64,
}

struct Settings {
    lambda: Option<f64>,
    communities: Option<usize>,
    cv: bool,
    folds: usize,
    grid: Option<Vec<f64>>,
    max_communities: usize,
    linkage: Linkage,
    seed: u64,
    admm: AdmmConfig,
    logistic: LogisticConfig,
}

struct Fitted {
    model: FittedModel,
    lambda: Option<f64>,
    communities: Option<usize>,
    standardized_tuning: Option<f64>,
    solver: Option<SolveDiagnostics>,
    cv: Option<SelectionSummary>,
}

impl Fitted {
    fn plain(model: impl Into<FittedModel>) -> Self {
        Fitted { model: model.into(), lambda: None, communities: None, standardized_tuning: None, solver: None, cv: None }
    }
}

fn run_cv<T: PathTrainer<Model: Classifier>>(d: &LabeledDataset, grid: Grid, s: &Settings, trainer: &T) -> CliResult<(f64, SelectionSummary)> {
    let r = cv_select(d, &grid, s.folds, s.seed, trainer, error_scorer)?;
    Ok((r.chosen, r.summary()))
}

fn grid_or(s: &Settings, default: impl FnOnce() -> sqda::Result<Grid>) -> CliResult<Grid> {
    Ok(match &s.grid {
        Some(v) => Grid::new(v.clone())?,
        None => default()?,
    })
}

fn fit_kind(kind: Kind, d: &LabeledDataset, s: &Settings) -> CliResult<Fitted> {
    let tuned = |name: &str, value: Option<f64>| -> CliResult<()> {
        match (s.cv, value) {
            (true, Some(_)) => Err(CliError::Usage(format!("--cv and --{name} are mutually exclusive"))),
            (false, None) => Err(CliError::Usage(format!("{kind:?} needs --{name} or --cv").to_lowercase())),
            _ => Ok(()),
        }
    };
    Ok(match kind {
        Kind::Nb => Fitted::plain(fit_naive_bayes(d)?),
        Kind::Qda => Fitted::plain(fit_qda(d)?),
        Kind::Lr => Fitted::plain(fit_logistic_regression(d, &s.logistic)?),
        Kind::Drda => {
            tuned("lambda", s.lambda)?;
            let (lambda, cv) = match s.lambda {
                Some(l) => (l, None),
                None => {
                    let (l, summary) = run_cv(d, grid_or(s, || Ok(drda_grid()))?, s, &DrdaTrainer)?;
                    (l, Some(summary))
                }
            };
            let model = fit_drda(d, lambda)?;
            let qda = fit_qda(d).ok();
            let st = qda.and_then(|q| standardized_tuning(&model.precisions, &q.precisions).ok());
            Fitted { model: model.into(), lambda: Some(lambda), communities: None, standardized_tuning: st, solver: None, cv }
        }
        Kind::Sqda => {
            tuned("lambda", s.lambda)?;
            let (lambda, cv) = match s.lambda {
                Some(l) => (l, None),
                None => {
                    let trainer = SqdaTrainer { cfg: s.admm };
                    let (l, summary) = run_cv(d, grid_or(s, || sqda_grid(d, s.admm))?, s, &trainer)?;
                    (l, Some(summary))
                }
            };
            let fit = fit_sqda_detailed(d, lambda, &s.admm)?;
            let qda = fit_qda(d).ok();
            let st = qda.and_then(|q| standardized_tuning(&fit.model.precisions, &q.precisions).ok());
            Fitted {
                model: fit.model.into(),
                lambda: Some(lambda),
                communities: None,
                standardized_tuning: st,
                solver: Some(fit.diagnostics),
                cv,
            }
        }
        Kind::Clr => {
            tuned("communities", s.communities.map(|c| c as f64))?;
            let trainer = ClrTrainer { linkage: s.linkage, logistic: s.logistic };
            let (l, cv) = match s.communities {
                Some(l) => (l, None),
                None => {
                    let grid = grid_or(s, || Grid::counts(s.max_communities.min(d.p())))?;
                    let (l, summary) = run_cv(d, grid, s, &trainer)?;
                    (l as usize, Some(summary))
                }
            };
            if l == 0 || l > d.p() {
                return Err(CliError::Usage(format!("--communities must lie in 1..={}", d.p())));
            }
            let partition = cut_dendrogram(&estimate_dendrogram(d, s.linkage)?, CutRule::Into(l))?;
            let logistic = s.logistic;
            let model = fit_community_model(d, &partition, |sub| Ok(fit_logistic_regression(sub, &logistic)?.into()))?;
            Fitted {
                model: model.into(),
                lambda: None,
                communities: Some(l),
                standardized_tuning: None,
                solver: None,
                cv,
            }
        }
    })
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let c: FitConfig = load(a.config.as_deref())?;
    let train = require(a.train.or(c.train), "train")?;
    let kind = require(a.kind.or(c.kind), "kind")?;
    let out = require(a.out.or(c.out), "out")?;
    let report_path = a.report.or(c.report);
    let grid = match a.grid {
        Some(text) => Some(parse_list(&text)?),
        None => c.grid,
    };
    let linkage: Linkage = a.linkage.or(c.linkage).as_deref().unwrap_or("alc").parse()?;
    let mut admm = AdmmConfig::default();
    let mut logistic = LogisticConfig::default();
    if let Some(m) = a.max_iter.or(c.max_iter) {
        admm.max_iter = m;
        logistic.max_iter = m;
    }
    if let Some(r) = a.ridge.or(c.ridge) {
        logistic.ridge = r;
    }
    let settings = Settings {
        lambda: a.lambda.or(c.lambda),
        communities: a.communities.or(c.communities),
        cv: a.cv || c.cv.unwrap_or(false),
        folds: a.folds.or(c.folds).unwrap_or(5),
        grid,
        max_communities: a.max_communities.or(c.max_communities).unwrap_or(20),
        linkage,
        seed: a.seed.or(c.seed).unwrap_or(1),
        admm,
        logistic,
    };

    let raw = read_labeled_csv(&train, None)?;
    let pre = Preprocessing {
        log_offset: a.log_offset.or(c.log_offset),
        average_groups: a.avg_cols.or(c.avg_cols).map(read_column_groups).transpose()?,
        input_features: raw.p(),
    };
    pre.validate()?;
    let d = pre.apply(&raw)?;

    let fitted = fit_kind(kind, &d, &settings)?;
    let training_error = classifier_error(&fitted.model, &d)?;
    let file = ModelFile { format: MODEL_FORMAT.into(), preprocessing: pre, model: fitted.model };
    write_text(&out, &to_json(&file)?)?;
    let report = FitReport {
        kind,
        train,
        n: d.n(),
        p: d.p(),
        classes: d.n_classes(),
        lambda: fitted.lambda,
        communities: fitted.communities,
        standardized_tuning: fitted.standardized_tuning,
        solver: fitted.solver,
        training_error,
        cv: fitted.cv.map(|mut s| {
            s.standardized_tuning = fitted.standardized_tuning;
            s
        }),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_or_print(report_path.as_deref(), &to_json(&report)?)
}

// ----------------------------------------------------------------- predict

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature CSV; a trailing `label` column is ignored.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Predictions CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    out: Option<PathBuf>,
}

pub fn read_model(path: &Path) -> CliResult<ModelFile> {
    let file: ModelFile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: not a model file: {e}", path.display())))?;
    if file.format != MODEL_FORMAT {
        return Err(CliError::Usage(format!("{}: unsupported model format '{}'", path.display(), file.format)));
    }
    file.preprocessing.validate()?;
    file.model.validate()?;
    if file.preprocessing.output_features() != file.model.n_features() {
        return Err(CliError::Usage(format!("{}: preprocessing and model dimensions disagree", path.display())));
    }
    Ok(file)
}

pub fn predict(a: PredictArgs) -> CliResult<()> {
    let c: PredictConfig = load(a.config.as_deref())?;
    let model_path = require(a.model.or(c.model), "model")?;
    let input = require(a.input.or(c.input), "input")?;
    let out = a.out.or(c.out);
    let file = read_model(&model_path)?;
    let table = read_features_csv(&input)?;
    let expected = file.preprocessing.input_features;
    if table.rows > 0 && table.p() != expected {
        return Err(sqda::Error::InvalidInput(format!(
            "{}: {} feature columns, but the model expects {expected}",
            input.display(),
            table.p()
        ))
        .into());
    }
    let k = file.model.n_classes();
    let mut text = String::from("row,predicted");
    for c in 1..=k {
        let _ = write!(text, ",posterior_{c}");
    }
    text.push('\n');
    for i in 0..table.rows {
        let x = file.preprocessing.apply_row(table.row(i))?;
        let post = file.model.posterior(&x)?;
        let class = sqda::classifiers::argmax(&post);
        let _ = write!(text, "{},{}", i + 1, class + 1);
        for v in post {
            let _ = write!(text, ",{}", format_value(v));
        }
        text.push('\n');
    }
    write_or_print(out.as_deref(), &text)
}

// --------------------------------------------------------------- benchmark

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Experiment name; `list` prints the known names.
    experiment: Option<String>,
    /// Number of replications (default 10).
    #[arg(long)]
    reps: Option<usize>,
    /// Replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Results table CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication results as JSON.
    #[arg(long)]
    replications: Option<PathBuf>,
    /// Corpus CSV for the spam benchmark.
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkConfig {
    experiment: Option<String>,
    reps: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    replications: Option<PathBuf>,
    data: Option<PathBuf>,
}

pub fn benchmark(a: BenchmarkArgs) -> CliResult<()> {
    let c: BenchmarkConfig = load(a.config.as_deref())?;
    let name = require(a.experiment.or(c.experiment), "experiment")?;
    if name == "list" {
        return write_or_print(None, &(sqda::experiments::EXPERIMENT_NAMES.join("\n") + "\n"));
    }
    let exp = experiment(&name, a.data.or(c.data))?;
    let reps = a.reps.or(c.reps).unwrap_or(10);
    let seed = a.seed.or(c.seed).unwrap_or(1);
    let out = a.out.or(c.out);
    if let Some(dir) = out.as_deref().and_then(Path::parent).filter(|p| !p.as_os_str().is_empty()) {
        require_dir(dir)?;
    }
    let table = run_benchmark(&name, &exp, reps, seed)?;
    if let Some(path) = a.replications.or(c.replications) {
        write_text(path, &to_json(&table.replications)?)?;
    }
    write_or_print(out.as_deref(), &table.to_csv())
}
