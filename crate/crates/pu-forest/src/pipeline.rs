//! Cross-validated training and scoring across seeds, folds, and bags, and
//! assembly of the per-case score matrix.
//!
//! Every trainable case is scored out-of-fold: only forests whose bags were
//! drawn from the other folds ever see it. Negative cases sit outside all
//! folds, so each (seed, bag) scores them with every fold's forest and the
//! fold dimension is collapsed by averaging, leaving exactly
//! `n_seeds * n_bags` scores per case across the board.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::cv::{make_bags, make_folds, BagSpec, CvError, FoldPlan, SeedPlan};
use crate::data::{Dataset, LabelKind, VesselYearRecord};
use crate::exec::{self, ExecMode};
use crate::featsel::{select_features, SelectError, SelectionMask, DEFAULT_CORR_THRESHOLD};
use crate::forest::{score_row, train_forest, ForestConfig, ForestError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("case '{case_id}' has no scores")]
    EmptyScoreList { case_id: String },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

/// Run-level configuration for the cross-validated scoring pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub n_folds: usize,
    pub n_bags: usize,
    pub corr_threshold: f64,
    pub forest: ForestConfig,
    pub exec: ExecMode,
    /// When set, every trained forest is saved to
    /// `<dir>/<seed>_<fold>_<bag>.forest`.
    pub model_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_folds: crate::cv::DEFAULT_N_FOLDS,
            n_bags: crate::cv::DEFAULT_N_BAGS,
            corr_threshold: DEFAULT_CORR_THRESHOLD,
            forest: ForestConfig::default(),
            exec: ExecMode::default(),
            model_dir: None,
        }
    }
}

/// One score with its provenance. `fold` is `None` for negative cases,
/// whose per-(seed, bag) score averages the forests of all folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub seed_index: usize,
    pub fold: Option<usize>,
    pub bag: usize,
    pub score: f64,
}

/// All scores of one case plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseScores {
    pub label: LabelKind,
    pub scores: Vec<ScoreEntry>,
    pub avg_score: f64,
}

/// Per-case score collection keyed by case id; deterministic iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ScoreMatrix {
    cases: BTreeMap<String, CaseScores>,
}

impl ScoreMatrix {
    pub fn get(&self, case_id: &str) -> Option<&CaseScores> {
        self.cases.get(case_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CaseScores)> {
        self.cases.iter()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Average scores of cases with the given label, in case-id order.
    pub fn avg_scores_with_label(&self, label: LabelKind) -> Vec<f64> {
        self.cases
            .values()
            .filter(|c| c.label == label)
            .map(|c| c.avg_score)
            .collect()
    }

    /// Average scores of every case, in case-id order.
    pub fn all_avg_scores(&self) -> Vec<f64> {
        self.cases.values().map(|c| c.avg_score).collect()
    }
}

/// Arithmetic mean of each case's scores. Idempotent; errors on a case with
/// an empty score list.
pub fn average_scores(matrix: &ScoreMatrix) -> Result<BTreeMap<String, f64>, PipelineError> {
    let mut out = BTreeMap::new();
    for (case_id, case) in matrix.iter() {
        if case.scores.is_empty() {
            return Err(PipelineError::EmptyScoreList {
                case_id: case_id.clone(),
            });
        }
        let mean = case.scores.iter().map(|e| e.score).sum::<f64>() / case.scores.len() as f64;
        out.insert(case_id.clone(), mean);
    }
    Ok(out)
}

/// Everything a run produces besides the artifacts on disk: the score
/// matrix plus the fold plans and bag specs per seed for auditability.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub matrix: ScoreMatrix,
    pub fold_plans: Vec<FoldPlan>,
    /// Bags grouped per seed index.
    pub bags: Vec<Vec<BagSpec>>,
    /// Selection masks keyed by (seed_index, fold, bag), in task order.
    pub masks: Vec<((usize, usize, usize), SelectionMask)>,
}

struct ForestTask<'a> {
    bag: &'a BagSpec,
    /// Indices into `dataset.records()` of this forest's scoring targets
    /// (the bag's test fold), excluding negatives.
    test_rows: Vec<usize>,
}

struct ForestOutput {
    seed_index: usize,
    fold: usize,
    bag: usize,
    mask: SelectionMask,
    /// (record index, score) for the test fold.
    test_scores: Vec<(usize, f64)>,
    /// Scores for the negative cases, aligned with `negative_rows`.
    negative_scores: Vec<f64>,
}

/// Train all forests and collect every case's out-of-fold scores.
///
/// Each case ends with exactly `seed_plan.n_seeds() * config.n_bags` scores.
/// The task grid is executed according to `config.exec`; scores carry
/// provenance tags and assembly is keyed by case id, so the result is
/// bitwise identical for any thread count.
pub fn run_pipeline(
    dataset: &Dataset,
    seed_plan: &SeedPlan,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    let mut fold_plans = Vec::with_capacity(seed_plan.n_seeds());
    let mut bags_per_seed = Vec::with_capacity(seed_plan.n_seeds());
    for si in 0..seed_plan.n_seeds() {
        let plan = make_folds(dataset, seed_plan.fold_seed(si), config.n_folds)?;
        let bags = make_bags(&plan, dataset, seed_plan, si, config.n_bags)?;
        fold_plans.push(plan);
        bags_per_seed.push(bags);
    }

    let negative_rows: Vec<usize> = dataset
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == LabelKind::Negative)
        .map(|(i, _)| i)
        .collect();

    // Task grid in (seed, fold, bag) order.
    let mut tasks = Vec::new();
    for (si, bags) in bags_per_seed.iter().enumerate() {
        let plan = &fold_plans[si];
        let mut test_rows_per_fold: Vec<Vec<usize>> = vec![Vec::new(); config.n_folds];
        for (i, rec) in dataset.records().iter().enumerate() {
            if let Some(f) = plan.fold_of(&rec.case_id) {
                test_rows_per_fold[f].push(i);
            }
        }
        for bag in bags {
            tasks.push(ForestTask {
                bag,
                test_rows: test_rows_per_fold[bag.fold_index].clone(),
            });
        }
    }

    let outputs: Vec<Result<ForestOutput, PipelineError>> =
        exec::map_slice(config.exec, &tasks, |task| {
            let bag = task.bag;
            let rows: Vec<&VesselYearRecord> = bag
                .positive_ids
                .iter()
                .chain(&bag.unlabeled_ids)
                .map(|id| dataset.get(id).expect("bag ids come from the dataset"))
                .collect();
            let mask = select_features(&rows, dataset.catalog(), config.corr_threshold)?;
            let seed = seed_plan.forest_seed(bag.seed_index, bag.fold_index, bag.bag_index);
            let forest = train_forest(bag, dataset, &mask, &config.forest, seed, config.exec)?;
            if let Some(dir) = &config.model_dir {
                let path = dir.join(format!(
                    "{}_{}_{}.forest",
                    bag.seed_index, bag.fold_index, bag.bag_index
                ));
                forest.save(&path)?;
            }
            let score_of = |i: &usize| -> f64 {
                let row = forest.layout().encode(&dataset.records()[*i]);
                score_row(&forest, &row)
            };
            let test_scores = task
                .test_rows
                .iter()
                .map(|i| (*i, score_of(i)))
                .collect();
            let negative_scores = negative_rows.iter().map(score_of).collect();
            Ok(ForestOutput {
                seed_index: bag.seed_index,
                fold: bag.fold_index,
                bag: bag.bag_index,
                mask,
                test_scores,
                negative_scores,
            })
        });

    // Merge in task order so entries per case are sorted by (seed, fold, bag).
    let mut per_case: BTreeMap<String, Vec<ScoreEntry>> = BTreeMap::new();
    // (seed, bag) -> per-negative running sums over folds
    let mut negative_sums: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut masks = Vec::with_capacity(tasks.len());
    for output in outputs {
        let out = output?;
        masks.push(((out.seed_index, out.fold, out.bag), out.mask));
        for (row, score) in out.test_scores {
            per_case
                .entry(dataset.records()[row].case_id.clone())
                .or_default()
                .push(ScoreEntry {
                    seed_index: out.seed_index,
                    fold: Some(out.fold),
                    bag: out.bag,
                    score,
                });
        }
        let sums = negative_sums
            .entry((out.seed_index, out.bag))
            .or_insert_with(|| vec![0.0; negative_rows.len()]);
        for (s, v) in sums.iter_mut().zip(&out.negative_scores) {
            *s += v;
        }
    }
    for ((seed_index, bag), sums) in negative_sums {
        for (k, sum) in sums.iter().enumerate() {
            per_case
                .entry(dataset.records()[negative_rows[k]].case_id.clone())
                .or_default()
                .push(ScoreEntry {
                    seed_index,
                    fold: None,
                    bag,
                    score: sum / config.n_folds as f64,
                });
        }
    }

    let mut cases = BTreeMap::new();
    for (case_id, scores) in per_case {
        let label = dataset.get(&case_id).expect("scored case exists").label;
        let avg_score = scores.iter().map(|e| e.score).sum::<f64>() / scores.len() as f64;
        cases.insert(
            case_id,
            CaseScores {
                label,
                scores,
                avg_score,
            },
        );
    }

    Ok(PipelineResult {
        matrix: ScoreMatrix { cases },
        fold_plans,
        bags: bags_per_seed,
        masks,
    })
}

fn fold_tag(fold: Option<usize>) -> String {
    match fold {
        Some(f) => f.to_string(),
        None => "-".to_string(),
    }
}

/// Write `scores.csv`: case_id, seed, fold, bag, score.
pub fn write_scores_csv(matrix: &ScoreMatrix, path: &Path) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let io_err = |e: csv::Error| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(["case_id", "seed", "fold", "bag", "score"])
        .map_err(io_err)?;
    for (case_id, case) in matrix.iter() {
        for e in &case.scores {
            w.write_record([
                case_id.as_str(),
                &e.seed_index.to_string(),
                &fold_tag(e.fold),
                &e.bag.to_string(),
                &e.score.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Write `avg_scores.csv`: case_id, avg_score, n_scores.
pub fn write_avg_scores_csv(matrix: &ScoreMatrix, path: &Path) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let io_err = |e: csv::Error| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(["case_id", "avg_score", "n_scores"])
        .map_err(io_err)?;
    for (case_id, case) in matrix.iter() {
        w.write_record([
            case_id.as_str(),
            &case.avg_score.to_string(),
            &case.scores.len().to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
