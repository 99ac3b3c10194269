//! Scalar objectives the optimizers minimize: chronological-holdout RMSE and
//! 5-fold cross-validated mean RMSE, both computed on the (scaled) training
//! portion of an experiment cell. The outer test rows never reach this module.

use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::features::{chrono_split, Matrix, SupervisedDataset};
use crate::gbt::{fit_prepared, predict, PreparedData};
use crate::metrics::rmse;
use crate::rng::derive_seed;
use crate::space::HyperParams;

/// Validation protocol for one optimizer's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Train on the earlier portion, score RMSE on the later portion.
    Holdout,
    /// Five contiguous folds; mean of the five per-fold RMSEs.
    Cv5,
}

/// One train/validate partition with its features presorted for refitting.
struct EvalSplit {
    prep: PreparedData,
    valid_x: Matrix,
    valid_y: Vec<f64>,
    fit_seed: u64,
}

impl EvalSplit {
    fn score(&self, hp: &HyperParams) -> Result<f64> {
        let model = fit_prepared(&self.prep, hp, self.fit_seed)?;
        let pred = predict(&model, &self.valid_x)?;
        rmse(&self.valid_y, &pred)
    }
}

type HpKey = [u64; 6];

fn hp_key(hp: &HyperParams) -> HpKey {
    [
        u64::from(hp.max_depth),
        hp.learning_rate.to_bits(),
        u64::from(hp.n_estimators),
        hp.subsample.to_bits(),
        hp.colsample_bytree.to_bits(),
        hp.min_child_weight.to_bits(),
    ]
}

/// Everything needed to evaluate one hyperparameter configuration on one
/// experiment cell. The split and presort work happens once, lazily, and is
/// reused across the whole optimization run on this cell.
pub struct ObjectiveSpec {
    pub dataset: SupervisedDataset,
    pub mode: EvalMode,
    pub holdout_fraction: f64,
    pub seed: u64,
    holdout: OnceCell<EvalSplit>,
    folds: OnceCell<Vec<EvalSplit>>,
    holdout_memo: RefCell<HashMap<HpKey, f64>>,
}

impl ObjectiveSpec {
    pub fn new(dataset: SupervisedDataset, mode: EvalMode, seed: u64) -> ObjectiveSpec {
        ObjectiveSpec {
            dataset,
            mode,
            holdout_fraction: 0.2,
            seed,
            holdout: OnceCell::new(),
            folds: OnceCell::new(),
            holdout_memo: RefCell::new(HashMap::new()),
        }
    }

    /// Evaluates under this spec's own mode.
    pub fn eval(&self, hp: &HyperParams) -> Result<f64> {
        match self.mode {
            EvalMode::Holdout => eval_holdout(self, hp),
            EvalMode::Cv5 => eval_cv5(self, hp),
        }
    }

    fn holdout_split(&self) -> Result<&EvalSplit> {
        init_once(&self.holdout, || {
            let pair = chrono_split(&self.dataset, self.holdout_fraction)?;
            Ok(EvalSplit {
                prep: PreparedData::from_dataset(&pair.train)?,
                valid_x: pair.test.x,
                valid_y: pair.test.y,
                fit_seed: derive_seed(self.seed, "holdout"),
            })
        })
    }

    fn fold_splits(&self) -> Result<&Vec<EvalSplit>> {
        init_once(&self.folds, || {
            let m = self.dataset.len();
            let mut splits = Vec::with_capacity(5);
            let mut start = 0;
            for i in 0..5 {
                // Balanced contiguous partition: the first (m mod 5) folds
                // take the extra row.
                let len = m / 5 + usize::from(i < m % 5);
                if len == 0 {
                    return Err(Error::Split(format!("fold {i} empty for {m} rows")));
                }
                let end = start + len;
                splits.push(EvalSplit {
                    prep: PreparedData::from_dataset(&rows_outside(&self.dataset, start, end))?,
                    valid_x: rows_inside(&self.dataset.x, start, end),
                    valid_y: self.dataset.y[start..end].to_vec(),
                    fit_seed: derive_seed(self.seed, &format!("fold:{i}")),
                });
                start = end;
            }
            Ok(splits)
        })
    }
}

/// `OnceCell::get_or_try_init` is unstable, so route through an Option.
fn init_once<'a, T>(cell: &'a OnceCell<T>, init: impl FnOnce() -> Result<T>) -> Result<&'a T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

fn rows_inside(x: &Matrix, start: usize, end: usize) -> Matrix {
    let p = x.cols;
    Matrix { data: x.data[start * p..end * p].to_vec(), rows: end - start, cols: p }
}

fn rows_outside(ds: &SupervisedDataset, start: usize, end: usize) -> SupervisedDataset {
    let p = ds.x.cols;
    let m = ds.len();
    let mut data = Vec::with_capacity((m - (end - start)) * p);
    data.extend_from_slice(&ds.x.data[..start * p]);
    data.extend_from_slice(&ds.x.data[end * p..]);
    let mut y = Vec::with_capacity(m - (end - start));
    y.extend_from_slice(&ds.y[..start]);
    y.extend_from_slice(&ds.y[end..]);
    SupervisedDataset {
        x: Matrix { data, rows: m - (end - start), cols: p },
        y,
        feature_names: ds.feature_names.clone(),
    }
}

/// Holdout RMSE: fit on the earlier `1 − holdout_fraction` of the rows,
/// score on the rest. Repeated configurations are served from a cache, so
/// an optimizer revisiting a point pays no second fit.
pub fn eval_holdout(spec: &ObjectiveSpec, hp: &HyperParams) -> Result<f64> {
    if spec.dataset.len() < 10 {
        return Err(Error::Split(format!(
            "holdout objective needs ≥ 10 rows, got {}",
            spec.dataset.len()
        )));
    }
    let key = hp_key(hp);
    if let Some(&v) = spec.holdout_memo.borrow().get(&key) {
        return Ok(v);
    }
    let v = spec.holdout_split()?.score(hp)?;
    spec.holdout_memo.borrow_mut().insert(key, v);
    Ok(v)
}

/// Mean RMSE over five contiguous folds, training on the other four each
/// time. Always performs exactly five fits — no caching — so fit-count
/// accounting stays exact.
pub fn eval_cv5(spec: &ObjectiveSpec, hp: &HyperParams) -> Result<f64> {
    if spec.dataset.len() < 25 {
        return Err(Error::Split(format!(
            "5-fold objective needs ≥ 25 rows, got {}",
            spec.dataset.len()
        )));
    }
    let folds = spec.fold_splits()?;
    let mut sum = 0.0;
    for fold in folds {
        sum += fold.score(hp)?;
    }
    Ok(sum / 5.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::fit_calls;

    fn dataset(m: usize, target: impl Fn(usize) -> f64) -> SupervisedDataset {
        let mut x = Matrix::zeros(m, 3);
        let mut y = Vec::with_capacity(m);
        for i in 0..m {
            x.set(i, 0, i as f64);
            x.set(i, 1, (i as f64 * 0.37).sin());
            x.set(i, 2, ((i * i) % 17) as f64);
            y.push(target(i));
        }
        SupervisedDataset {
            x,
            y,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    fn small_hp() -> HyperParams {
        HyperParams {
            max_depth: 3,
            learning_rate: 0.3,
            n_estimators: 20,
            subsample: 1.0,
            colsample_bytree: 1.0,
            min_child_weight: 1.0,
        }
    }

    #[test]
    fn constant_target_scores_zero_in_both_modes() {
        let ds = dataset(40, |_| 7.5);
        let hold = ObjectiveSpec::new(ds.clone(), EvalMode::Holdout, 3);
        assert_eq!(eval_holdout(&hold, &small_hp()).unwrap(), 0.0);
        let cv = ObjectiveSpec::new(ds, EvalMode::Cv5, 3);
        assert_eq!(eval_cv5(&cv, &small_hp()).unwrap(), 0.0);
    }

    #[test]
    fn repeated_evaluation_is_deterministic() {
        let ds = dataset(60, |i| (i as f64 * 0.21).sin() + 0.1 * ((i % 7) as f64));
        let spec = ObjectiveSpec::new(ds.clone(), EvalMode::Cv5, 11);
        let a = eval_cv5(&spec, &small_hp()).unwrap();
        let b = eval_cv5(&spec, &small_hp()).unwrap();
        assert_eq!(a, b);
        // A fresh spec with the same seed reproduces the value exactly.
        let spec2 = ObjectiveSpec::new(ds, EvalMode::Cv5, 11);
        assert_eq!(eval_cv5(&spec2, &small_hp()).unwrap(), a);
    }

    #[test]
    fn seed_changes_the_objective_when_sampling_is_active() {
        let ds = dataset(80, |i| (i as f64 * 0.13).cos() * (1.0 + (i % 5) as f64));
        let mut hp = small_hp();
        hp.subsample = 0.5;
        hp.colsample_bytree = 0.5;
        let a = eval_holdout(&ObjectiveSpec::new(ds.clone(), EvalMode::Holdout, 1), &hp).unwrap();
        let b = eval_holdout(&ObjectiveSpec::new(ds, EvalMode::Holdout, 2), &hp).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn fold_sizes_follow_the_balanced_partition_rule() {
        let ds = dataset(103, |i| i as f64);
        let spec = ObjectiveSpec::new(ds, EvalMode::Cv5, 0);
        let folds = spec.fold_splits().unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.valid_y.len()).collect();
        assert_eq!(sizes, vec![21, 21, 21, 20, 20]);
        // Folds tile the row range in order.
        let mut rebuilt = Vec::new();
        for f in folds {
            rebuilt.extend_from_slice(&f.valid_y);
        }
        assert_eq!(rebuilt, (0..103).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn cv5_always_costs_exactly_five_fits() {
        let ds = dataset(50, |i| (i as f64).sqrt());
        let spec = ObjectiveSpec::new(ds, EvalMode::Cv5, 5);
        let hp = small_hp();
        let before = fit_calls();
        eval_cv5(&spec, &hp).unwrap();
        assert_eq!(fit_calls() - before, 5);
        // No caching: the same configuration costs five fits again.
        let before = fit_calls();
        eval_cv5(&spec, &hp).unwrap();
        assert_eq!(fit_calls() - before, 5);
    }

    #[test]
    fn holdout_caches_repeated_configurations() {
        let ds = dataset(50, |i| (i as f64).sqrt());
        let spec = ObjectiveSpec::new(ds, EvalMode::Holdout, 5);
        let hp = small_hp();
        let before = fit_calls();
        let a = eval_holdout(&spec, &hp).unwrap();
        assert_eq!(fit_calls() - before, 1);
        let before = fit_calls();
        let b = eval_holdout(&spec, &hp).unwrap();
        assert_eq!(fit_calls() - before, 0);
        assert_eq!(a, b);
        // A different configuration is a fresh fit.
        let mut hp2 = hp;
        hp2.learning_rate = 0.1;
        let before = fit_calls();
        eval_holdout(&spec, &hp2).unwrap();
        assert_eq!(fit_calls() - before, 1);
    }

    #[test]
    fn short_datasets_are_rejected_per_mode() {
        let ds9 = dataset(9, |i| i as f64);
        assert!(eval_holdout(&ObjectiveSpec::new(ds9, EvalMode::Holdout, 0), &small_hp()).is_err());
        let ds24 = dataset(24, |i| i as f64);
        assert!(eval_cv5(&ObjectiveSpec::new(ds24, EvalMode::Cv5, 0), &small_hp()).is_err());
        let ds25 = dataset(25, |i| i as f64);
        assert!(eval_cv5(&ObjectiveSpec::new(ds25, EvalMode::Cv5, 0), &small_hp()).is_ok());
    }

    #[test]
    fn holdout_trains_strictly_before_the_validation_rows() {
        let ds = dataset(40, |i| i as f64);
        let spec = ObjectiveSpec::new(ds, EvalMode::Holdout, 0);
        let split = spec.holdout_split().unwrap();
        // ceil(40 * 0.2) = 8 validation rows, chronologically last.
        assert_eq!(split.valid_y, (32..40).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn mean_of_fold_rmses_hand_check() {
        // eval_cv5 returns the plain mean of the five fold scores; verify the
        // arithmetic convention on a synthetic fold-score vector.
        let fold_scores = [1.0, 1.0, 1.0, 1.0, 6.0];
        let mean = fold_scores.iter().sum::<f64>() / 5.0;
        assert_eq!(mean, 2.0);
    }
}
