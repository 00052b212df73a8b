//! Grid search by hold-out validation or stratified k-fold cross-validation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::Classifier;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Strictly increasing, non-empty candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid(Vec<f64>);

impl Grid {
    /// Sorts `values`; duplicates and non-finite values are rejected.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("grid values must be distinct"));
        }
        Ok(Grid(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `1, 2, …, max`.
    pub fn counts(max: usize) -> Result<Self> {
        Grid::new((1..=max).map(|l| l as f64).collect())
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Grid::new(v)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

pub fn misclassification_error(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("no observations to score"));
    }
    let wrong = predictions.iter().zip(labels).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Test error of a fitted classifier on `d`.
pub fn classifier_error<M: Classifier + ?Sized>(m: &M, d: &LabeledDataset) -> Result<f64> {
    misclassification_error(&m.predict_dataset(d)?, d.labels())
}

/// Fold index of every row. Each class is shuffled with a ChaCha8
/// generator seeded by `seed` and dealt round-robin; the dealing position
/// carries over from one class to the next so total fold sizes stay even.
pub fn stratified_kfold(d: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; d.n()];
    let mut next = 0;
    for k in 0..d.n_classes() {
        let mut rows = d.class_rows(k);
        if rows.len() < folds {
            return Err(Error::invalid(format!(
                "class {} has {} observations, fewer than {folds} folds",
                k + 1,
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for i in rows {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

/// `(train, validation)` for fold `f`.
pub fn fold_split(d: &LabeledDataset, assignment: &[usize], f: usize) -> (LabeledDataset, LabeledDataset) {
    let (valid, train): (Vec<usize>, Vec<usize>) = (0..d.n()).partition(|&i| assignment[i] == f);
    (d.subset(&train), d.subset(&valid))
}

/// A model family fitted along a grid. `prepare` does the work shared by
/// every grid value on one training set (moments, dendrogram, …).
pub trait PathTrainer: Sync {
    type Model: Send;
    type Path: Sync;

    fn prepare(&self, train: &LabeledDataset) -> Result<Self::Path>;
    fn fit(&self, path: &Self::Path, value: f64) -> Result<Self::Model>;
}

/// Adapts a plain `(data, value) → model` closure.
pub struct FnTrainer<F>(pub F);

impl<M, F> PathTrainer for FnTrainer<F>
where
    M: Send,
    F: Fn(&LabeledDataset, f64) -> Result<M> + Sync,
{
    type Model = M;
    type Path = LabeledDataset;

    fn prepare(&self, train: &LabeledDataset) -> Result<LabeledDataset> {
        Ok(train.clone())
    }

    fn fit(&self, path: &LabeledDataset, value: f64) -> Result<M> {
        (self.0)(path, value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub value: f64,
    /// One entry per fold (a single entry for hold-out validation).
    pub errors: Vec<f64>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// First failure message, when the candidate was excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl CandidateScore {
    fn from_results(value: f64, results: Vec<Result<f64>>) -> Self {
        let mut errors = Vec::with_capacity(results.len());
        let mut failure = None;
        for r in results {
            match r {
                Ok(e) => errors.push(e),
                Err(e) => {
                    failure.get_or_insert_with(|| e.to_string());
                }
            }
        }
        if failure.is_some() {
            return CandidateScore { value, errors, mean: None, sd: None, failure };
        }
        let (mean, sd) = mean_sd(&errors);
        CandidateScore { value, errors, mean: Some(mean), sd: Some(sd), failure }
    }
}

/// Arithmetic mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Index of the smallest mean; ties go to the earliest (smallest) value.
fn select(scores: &[CandidateScore]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(m) = s.mean {
            if best.is_none_or(|b| m < scores[b].mean.expect("selected candidates have a mean")) {
                best = Some(i);
            }
        }
    }
    best.ok_or(Error::AllCandidatesFailed)
}

#[derive(Debug, Clone)]
pub struct CvResult<M> {
    pub folds: usize,
    pub candidates: Vec<CandidateScore>,
    pub chosen: f64,
    /// Refit on all data at `chosen`.
    pub model: M,
}

/// Serializable digest of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub chosen: f64,
    pub chosen_error: f64,
    pub folds: usize,
    pub candidates: Vec<CandidateScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardized_tuning: Option<f64>,
}

impl<M> CvResult<M> {
    pub fn chosen_score(&self) -> &CandidateScore {
        self.candidates.iter().find(|c| c.value == self.chosen).expect("chosen value is on the grid")
    }

    pub fn summary(&self) -> SelectionSummary {
        SelectionSummary {
            chosen: self.chosen,
            chosen_error: self.chosen_score().mean.expect("chosen candidate succeeded"),
            folds: self.folds,
            candidates: self.candidates.clone(),
            standardized_tuning: None,
        }
    }

    /// `candidate, fold_1 … fold_F, mean, sd, status`.
    pub fn to_csv(&self) -> String {
        candidates_csv(&self.candidates, self.folds)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn candidates_csv(candidates: &[CandidateScore], folds: usize) -> String {
    let mut out = String::from("candidate");
    for f in 1..=folds {
        let _ = write!(out, ",fold_{f}");
    }
    out.push_str(",mean,sd,status\n");
    for c in candidates {
        let _ = write!(out, "{}", c.value);
        for f in 0..folds {
            out.push(',');
            if c.failure.is_none() {
                let _ = write!(out, "{}", c.errors[f]);
            }
        }
        let status = match &c.failure {
            None => "ok".to_string(),
            Some(m) => format!("\"failed: {}\"", m.replace('"', "'")),
        };
        let _ = writeln!(out, ",{},{},{status}", fmt_opt(c.mean), fmt_opt(c.sd));
    }
    out
}

/// Stratified k-fold cross-validation over `grid`, then a refit on all of
/// `d` at the value with the smallest mean validation error.
///
/// A candidate failing on any fold is excluded. Folds run concurrently;
/// results are merged by index so the outcome does not depend on scheduling.
pub fn cv_select<T, S>(d: &LabeledDataset, grid: &Grid, folds: usize, seed: u64, trainer: &T, scorer: S) -> Result<CvResult<T::Model>>
where
    T: PathTrainer,
    S: Fn(&T::Model, &LabeledDataset) -> Result<f64> + Sync,
{
    let assignment = stratified_kfold(d, folds, seed)?;
    let per_fold: Vec<Vec<Result<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, valid) = fold_split(d, &assignment, f);
            match trainer.prepare(&train) {
                Ok(path) => grid
                    .values()
                    .iter()
                    .map(|&v| trainer.fit(&path, v).and_then(|m| scorer(&m, &valid)))
                    .collect(),
                Err(e) => {
                    let msg = e.to_string();
                    grid.values().iter().map(|_| Err(Error::invalid(msg.clone()))).collect()
                }
            }
        })
        .collect();
    let mut columns: Vec<Vec<Result<f64>>> = (0..grid.len()).map(|_| Vec::with_capacity(folds)).collect();
    for fold in per_fold {
        for (c, r) in fold.into_iter().enumerate() {
            columns[c].push(r);
        }
    }
    let candidates: Vec<CandidateScore> = grid
        .values()
        .iter()
        .zip(columns)
        .map(|(&v, results)| CandidateScore::from_results(v, results))
        .collect();
    let best = select(&candidates)?;
    let chosen = candidates[best].value;
    let model = trainer.fit(&trainer.prepare(d)?, chosen)?;
    Ok(CvResult { folds, candidates, chosen, model })
}

#[derive(Debug, Clone)]
pub struct HoldoutReport<M> {
    pub candidates: Vec<CandidateScore>,
    pub chosen: f64,
    pub validation_error: f64,
    /// `None` when the test set is empty.
    pub test_error: Option<f64>,
    /// Fitted on the training set at `chosen`.
    pub model: M,
}

/// Fits every candidate on `train`, selects on `validation` and reports the
/// chosen model's error on `test`.
pub fn holdout_protocol<T, S>(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    test: &LabeledDataset,
    grid: &Grid,
    trainer: &T,
    scorer: S,
) -> Result<HoldoutReport<T::Model>>
where
    T: PathTrainer,
    S: Fn(&T::Model, &LabeledDataset) -> Result<f64> + Sync,
{
    let path = trainer.prepare(train)?;
    let fitted: Vec<(Result<T::Model>, Result<f64>)> = grid
        .values()
        .par_iter()
        .map(|&v| match trainer.fit(&path, v) {
            Ok(m) => {
                let e = scorer(&m, validation);
                (Ok(m), e)
            }
            Err(e) => (Err(e), Err(Error::invalid("fit failed"))),
        })
        .collect();
    let mut models = Vec::with_capacity(fitted.len());
    let mut candidates = Vec::with_capacity(fitted.len());
    for (&v, (m, e)) in grid.values().iter().zip(fitted) {
        let score = match (&m, e) {
            (Err(err), _) => Err(Error::invalid(err.to_string())),
            (Ok(_), e) => e,
        };
        candidates.push(CandidateScore::from_results(v, vec![score]));
        models.push(m.ok());
    }
    let best = select(&candidates)?;
    let model = models.swap_remove(best).expect("selected candidate has a model");
    let test_error = if test.is_empty() { None } else { Some(scorer(&model, test)?) };
    Ok(HoldoutReport {
        chosen: candidates[best].value,
        validation_error: candidates[best].mean.expect("selected candidate has an error"),
        candidates,
        test_error,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit_drda, GaussianClassModel};
    use proptest::prelude::*;
    use rand::Rng;

    fn dataset(n_per: usize, k: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            for _ in 0..n_per {
                x.push(c as f64 + rng.random::<f64>() * 2.0);
                x.push(rng.random::<f64>());
                labels.push(c);
            }
        }
        LabeledDataset::new(2, x, labels, k).unwrap()
    }

    #[test]
    fn error_examples() {
        assert_eq!(misclassification_error(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(misclassification_error(&[1, 0], &[0, 1]).unwrap(), 1.0);
        let pred = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let truth = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        assert_eq!(misclassification_error(&pred, &truth).unwrap(), 0.3);
        assert!(misclassification_error(&[], &[]).is_err());
        assert!(misclassification_error(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn grid_validation() {
        assert_eq!(Grid::new(vec![3.0, 1.0, 2.0]).unwrap().values(), &[1.0, 2.0, 3.0]);
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn kfold_balance_and_determinism() {
        let d = dataset(10, 3, 1);
        let a = stratified_kfold(&d, 5, 7).unwrap();
        for k in 0..3 {
            for f in 0..5 {
                assert_eq!(d.class_rows(k).iter().filter(|&&i| a[i] == f).count(), 2);
            }
        }
        assert_eq!(a, stratified_kfold(&d, 5, 7).unwrap());
        assert_ne!(a, stratified_kfold(&d, 5, 8).unwrap());
        let err = stratified_kfold(&dataset(3, 2, 1), 5, 0).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
        assert!(stratified_kfold(&d, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn kfold_is_a_partition(n_per in 5usize..20, k in 1usize..4, folds in 2usize..6, seed in any::<u64>()) {
            prop_assume!(n_per >= folds);
            let d = dataset(n_per, k, seed);
            let a = stratified_kfold(&d, folds, seed).unwrap();
            prop_assert_eq!(a.len(), d.n());
            prop_assert!(a.iter().all(|&f| f < folds));
            let sizes: Vec<usize> = (0..folds).map(|f| (0..d.n()).filter(|&i| a[i] == f).count()).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), d.n());
            for c in 0..k {
                let per: Vec<usize> = (0..folds).map(|f| d.class_rows(c).iter().filter(|&&i| a[i] == f).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }
    }

    fn drda_trainer() -> FnTrainer<impl Fn(&LabeledDataset, f64) -> Result<GaussianClassModel> + Sync> {
        FnTrainer(|d: &LabeledDataset, v: f64| fit_drda(d, v))
    }

    #[test]
    fn cv_single_candidate_and_bookkeeping() {
        let d = dataset(20, 2, 3);
        let grid = Grid::new(vec![0.5]).unwrap();
        let r = cv_select(&d, &grid, 5, 1, &drda_trainer(), classifier_error).unwrap();
        assert_eq!(r.chosen, 0.5);
        let c = &r.candidates[0];
        assert_eq!(c.errors.len(), 5);
        let mean = c.errors.iter().sum::<f64>() / 5.0;
        assert!((c.mean.unwrap() - mean).abs() <= 1e-15);
        assert!(r.to_csv().starts_with("candidate,fold_1,fold_2,fold_3,fold_4,fold_5,mean,sd,status\n0.5,"));
    }

    #[test]
    fn cv_is_order_invariant_and_picks_minimum() {
        let d = dataset(20, 3, 4);
        let trainer = drda_trainer();
        let a = cv_select(&d, &Grid::new(vec![0.0, 0.3, 0.9]).unwrap(), 4, 2, &trainer, classifier_error).unwrap();
        let b = cv_select(&d, &Grid::new(vec![0.9, 0.0, 0.3]).unwrap(), 4, 2, &trainer, classifier_error).unwrap();
        assert_eq!(a.chosen, b.chosen);
        assert_eq!(a.candidates, b.candidates);
        let best = a.chosen_score().mean.unwrap();
        assert!(a.candidates.iter().all(|c| c.mean.unwrap() >= best));
    }

    #[test]
    fn ties_go_to_smallest_value() {
        let d = dataset(10, 2, 5);
        let trainer = FnTrainer(|d: &LabeledDataset, _v: f64| fit_drda(d, 1.0));
        let r = cv_select(&d, &Grid::new(vec![2.0, 1.0, 3.0]).unwrap(), 2, 0, &trainer, classifier_error).unwrap();
        assert_eq!(r.chosen, 1.0);
    }

    #[test]
    fn failing_candidates_are_excluded() {
        let d = dataset(10, 2, 6);
        // values above 1 are invalid DRDA parameters
        let r = cv_select(&d, &Grid::new(vec![0.5, 2.0]).unwrap(), 2, 0, &drda_trainer(), classifier_error).unwrap();
        assert_eq!(r.chosen, 0.5);
        assert!(r.candidates[1].failure.is_some());
        let err = cv_select(&d, &Grid::new(vec![2.0, 3.0]).unwrap(), 2, 0, &drda_trainer(), classifier_error).unwrap_err();
        assert!(matches!(err, Error::AllCandidatesFailed));
    }

    #[test]
    fn holdout_examples() {
        let train = dataset(20, 2, 7);
        let valid = dataset(20, 2, 8);
        let test = dataset(50, 2, 9);
        let trainer = drda_trainer();
        let one = holdout_protocol(&train, &valid, &test, &Grid::new(vec![0.25]).unwrap(), &trainer, classifier_error).unwrap();
        let direct = classifier_error(&fit_drda(&train, 0.25).unwrap(), &test).unwrap();
        assert_eq!(one.test_error, Some(direct));

        // validating on the training data selects the training-optimal value
        let grid = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let r = holdout_protocol(&train, &train, &test, &grid, &trainer, classifier_error).unwrap();
        let train_errs: Vec<f64> = grid.values().iter().map(|&v| classifier_error(&fit_drda(&train, v).unwrap(), &train).unwrap()).collect();
        let best = train_errs.iter().cloned().fold(f64::INFINITY, f64::min);
        let expected = grid.values()[train_errs.iter().position(|&e| e == best).unwrap()];
        assert_eq!(r.chosen, expected);

        let empty = train.subset(&[]);
        assert_eq!(holdout_protocol(&train, &valid, &empty, &grid, &trainer, classifier_error).unwrap().test_error, None);
    }

    #[test]
    fn mean_sd_values() {
        assert_eq!(mean_sd(&[0.2]), (0.2, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
