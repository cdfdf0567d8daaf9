//! Source-grouped cross-validation folds and 1:1 downsampled bag
//! construction, with fully deterministic seed derivation.
//!
//! Cases sharing a `source_id` always land in the same fold, so related
//! cases can never straddle the train/test boundary. Every random choice is
//! driven by a sub-stream seed derived from (master seed, fold, bag, tree)
//! with a stable 64-bit mix, which makes results independent of execution
//! order and parallelism.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Dataset, LabelKind};

pub const DEFAULT_N_FOLDS: usize = 5;
pub const DEFAULT_N_BAGS: usize = 10;

/// Attempts at re-shuffling fold groups before giving up on placing at
/// least one positive source in every fold.
const FOLD_COVERAGE_ATTEMPTS: u64 = 64;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("need at least {needed} distinct source_ids for {needed} folds, got {available}")]
    TooFewSources { needed: usize, available: usize },
    #[error(
        "cannot place a positive case in every fold: positives span {positive_sources} \
         source(s) across {n_folds} folds"
    )]
    FoldWithoutPositives {
        positive_sources: usize,
        n_folds: usize,
    },
    #[error(
        "fold {fold}: training pool has {available} unlabeled cases but {needed} are needed \
         for 1:1 downsampling"
    )]
    NotEnoughUnlabeled {
        fold: usize,
        needed: usize,
        available: usize,
    },
}

/// SplitMix64 finalizer; a stable, platform-independent 64-bit mix.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-stream seed by folding `parts` into `root`.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |h, &p| splitmix64(h ^ p))
}

const STREAM_FOLDS: u64 = 0x0F01;
const STREAM_BAGS: u64 = 0x0BA6;
const STREAM_FOREST: u64 = 0x0F0E;

/// The master seeds of a run plus the derivation rule for all sub-streams.
///
/// Identical `SeedPlan` + `Dataset` produce identical fold plans, bag specs,
/// and forests regardless of execution order or thread count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedPlan {
    pub master_seeds: Vec<u64>,
}

impl SeedPlan {
    pub fn new(master_seeds: Vec<u64>) -> Self {
        SeedPlan { master_seeds }
    }

    /// Three master seeds, matching the reference configuration.
    pub fn default_three() -> Self {
        SeedPlan::new(vec![1, 2, 3])
    }

    pub fn n_seeds(&self) -> usize {
        self.master_seeds.len()
    }

    pub fn fold_seed(&self, seed_index: usize) -> u64 {
        derive_seed(self.master_seeds[seed_index], &[STREAM_FOLDS])
    }

    pub fn bag_seed(&self, seed_index: usize, fold: usize, bag: usize) -> u64 {
        derive_seed(
            self.master_seeds[seed_index],
            &[STREAM_BAGS, fold as u64, bag as u64],
        )
    }

    pub fn forest_seed(&self, seed_index: usize, fold: usize, bag: usize) -> u64 {
        derive_seed(
            self.master_seeds[seed_index],
            &[STREAM_FOREST, fold as u64, bag as u64],
        )
    }
}

/// Assignment of every trainable case (positive or unlabeled) to a fold,
/// derived from an assignment of source groups to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    /// case_id -> fold index. Negative cases are absent: they sit outside
    /// all folds and are scored by every forest.
    assignments: BTreeMap<String, usize>,
    /// source_id -> fold index.
    groups: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.assignments.get(case_id).copied()
    }

    pub fn group_fold(&self, source_id: &str) -> Option<usize> {
        self.groups.get(source_id).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }

    pub fn groups(&self) -> &BTreeMap<String, usize> {
        &self.groups
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_folds];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Split the trainable cases into `n_folds` groups of roughly equal size,
/// keeping all cases of a source in the same fold.
///
/// Source groups are shuffled with a ChaCha stream seeded from `seed`, then
/// each group goes to the currently smallest fold (ties to the lowest fold
/// index), which bounds the fold-size spread by the largest group size. If
/// the resulting plan leaves some fold without a positive case, the shuffle
/// is retried with a derived sub-seed before reporting
/// [`CvError::FoldWithoutPositives`].
pub fn make_folds(dataset: &Dataset, seed: u64, n_folds: usize) -> Result<FoldPlan, CvError> {
    assert!(n_folds >= 2, "n_folds must be at least 2");

    // source -> (case ids, has positive), trainable cases only
    let mut by_source: BTreeMap<&str, (Vec<&str>, bool)> = BTreeMap::new();
    for rec in dataset.records() {
        if rec.label == LabelKind::Negative {
            continue;
        }
        let entry = by_source.entry(&rec.source_id).or_default();
        entry.0.push(&rec.case_id);
        entry.1 |= rec.label == LabelKind::Positive;
    }
    if by_source.len() < n_folds {
        return Err(CvError::TooFewSources {
            needed: n_folds,
            available: by_source.len(),
        });
    }
    let positive_sources = by_source.values().filter(|(_, p)| *p).count();
    if positive_sources < n_folds {
        return Err(CvError::FoldWithoutPositives {
            positive_sources,
            n_folds,
        });
    }

    let sources: Vec<&str> = by_source.keys().copied().collect();
    for attempt in 0..FOLD_COVERAGE_ATTEMPTS {
        let attempt_seed = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, &[attempt])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let mut order = sources.clone();
        order.shuffle(&mut rng);

        let mut fold_sizes = vec![0usize; n_folds];
        let mut fold_has_pos = vec![false; n_folds];
        let mut groups = BTreeMap::new();
        for src in &order {
            let (cases, has_pos) = &by_source[src];
            let fold = fold_sizes
                .iter()
                .enumerate()
                .min_by_key(|&(_, &s)| s)
                .map(|(i, _)| i)
                .unwrap();
            fold_sizes[fold] += cases.len();
            fold_has_pos[fold] |= has_pos;
            groups.insert(src.to_string(), fold);
        }
        if !fold_has_pos.iter().all(|&p| p) {
            continue;
        }
        let mut assignments = BTreeMap::new();
        for (src, (cases, _)) in &by_source {
            let fold = groups[*src];
            for case in cases {
                assignments.insert(case.to_string(), fold);
            }
        }
        return Ok(FoldPlan {
            n_folds,
            assignments,
            groups,
        });
    }
    Err(CvError::FoldWithoutPositives {
        positive_sources,
        n_folds,
    })
}

/// One downsampled training set: all training-side positives of a fold plus
/// an equal number of unlabeled cases sampled without replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BagSpec {
    pub seed_index: usize,
    pub fold_index: usize,
    pub bag_index: usize,
    /// Training-side positive case ids, sorted.
    pub positive_ids: Vec<String>,
    /// Sampled unlabeled case ids, |unlabeled_ids| == |positive_ids|.
    pub unlabeled_ids: Vec<String>,
}

/// Build `n_bags` bags per fold from the training side of each fold.
///
/// Sampling is without replacement from the fold's training unlabeled pool,
/// ordered by case id so the result does not depend on dataset row order.
pub fn make_bags(
    fold_plan: &FoldPlan,
    dataset: &Dataset,
    seed_plan: &SeedPlan,
    seed_index: usize,
    n_bags: usize,
) -> Result<Vec<BagSpec>, CvError> {
    // per-fold training pools, sorted by case id (BTreeMap order)
    let mut bags = Vec::with_capacity(fold_plan.n_folds * n_bags);
    for fold in 0..fold_plan.n_folds {
        let mut positives = Vec::new();
        let mut unlabeled = Vec::new();
        for (case_id, &f) in fold_plan.assignments() {
            if f == fold {
                continue; // test side
            }
            match dataset.get(case_id).map(|r| r.label) {
                Some(LabelKind::Positive) => positives.push(case_id.clone()),
                Some(LabelKind::Unlabeled) => unlabeled.push(case_id.clone()),
                _ => {}
            }
        }
        if positives.is_empty() {
            return Err(CvError::FoldWithoutPositives {
                positive_sources: 0,
                n_folds: fold_plan.n_folds,
            });
        }
        let need = positives.len();
        if unlabeled.len() < need {
            return Err(CvError::NotEnoughUnlabeled {
                fold,
                needed: need,
                available: unlabeled.len(),
            });
        }
        for bag in 0..n_bags {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed_plan.bag_seed(seed_index, fold, bag));
            let picked = rand::seq::index::sample(&mut rng, unlabeled.len(), need);
            let unlabeled_ids: Vec<String> =
                picked.iter().map(|i| unlabeled[i].clone()).collect();
            bags.push(BagSpec {
                seed_index,
                fold_index: fold,
                bag_index: bag,
                positive_ids: positives.clone(),
                unlabeled_ids,
            });
        }
    }
    Ok(bags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelKind;
    use crate::testutil::{dataset_from, record_with};
    use std::collections::BTreeSet;

    /// `sources[i] = (source_id, n_positive, n_unlabeled)`
    fn dataset_with_sources(sources: &[(&str, usize, usize)]) -> Dataset {
        let mut records = Vec::new();
        let mut n = 0usize;
        for (src, n_pos, n_unl) in sources {
            for _ in 0..*n_pos {
                records.push(record_with(
                    &format!("c{n:04}"),
                    LabelKind::Positive,
                    src,
                    |fi| fi as f64 + n as f64,
                ));
                n += 1;
            }
            for _ in 0..*n_unl {
                records.push(record_with(
                    &format!("c{n:04}"),
                    LabelKind::Unlabeled,
                    src,
                    |fi| fi as f64 * 0.5 + n as f64,
                ));
                n += 1;
            }
        }
        dataset_from(records)
    }

    #[test]
    fn five_sources_five_folds_is_a_bijection() {
        let ds = dataset_with_sources(&[
            ("s0", 1, 2),
            ("s1", 1, 2),
            ("s2", 1, 2),
            ("s3", 1, 2),
            ("s4", 1, 2),
        ]);
        let plan = make_folds(&ds, 11, 5).unwrap();
        let folds: BTreeSet<usize> = plan.groups().values().copied().collect();
        assert_eq!(folds.len(), 5, "each source alone in one fold");
        assert_eq!(plan.fold_sizes(), vec![3, 3, 3, 3, 3]);
    }

    #[test]
    fn shared_source_never_splits_across_100_seeds() {
        let mut sources: Vec<(&str, usize, usize)> =
            vec![("report_17", 2, 0), ("s_a", 1, 5), ("s_b", 1, 5), ("s_c", 1, 5), ("s_d", 1, 5)];
        sources.extend([("u0", 0, 8), ("u1", 0, 8), ("u2", 0, 8), ("u3", 0, 9)]);
        let ds = dataset_with_sources(&sources);
        let shared: Vec<String> = ds
            .records()
            .iter()
            .filter(|r| r.source_id == "report_17")
            .map(|r| r.case_id.clone())
            .collect();
        assert_eq!(shared.len(), 2);
        for seed in 0..100u64 {
            let plan = make_folds(&ds, seed, 5).unwrap();
            assert_eq!(
                plan.fold_of(&shared[0]),
                plan.fold_of(&shared[1]),
                "seed {seed} split source report_17"
            );
            // grouping invariant for every source
            for rec in ds.records() {
                assert_eq!(
                    plan.fold_of(&rec.case_id),
                    plan.group_fold(&rec.source_id),
                    "case fold must equal its group fold"
                );
            }
        }
    }

    #[test]
    fn mixed_sources_balance_audit() {
        // 23 sources of mixed sizes
        let sources: Vec<(String, usize, usize)> = (0..23)
            .map(|i| {
                let n_pos = if i % 3 == 0 { 2 } else { 1 };
                let n_unl = 1 + (i * 7) % 13;
                (format!("src{i:02}"), n_pos, n_unl)
            })
            .collect();
        let refs: Vec<(&str, usize, usize)> = sources
            .iter()
            .map(|(s, p, u)| (s.as_str(), *p, *u))
            .collect();
        let ds = dataset_with_sources(&refs);
        let plan = make_folds(&ds, 42, 5).unwrap();

        // exhaustive audit recomputed from the emitted plan
        let max_group = sources
            .iter()
            .map(|(_, p, u)| p + u)
            .max()
            .unwrap();
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().all(|&s| s > 0));
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        assert!(
            spread <= max_group,
            "spread {spread} exceeds max group size {max_group}"
        );
        // every trainable case in exactly one fold
        let trainable = ds
            .records()
            .iter()
            .filter(|r| r.label != LabelKind::Negative)
            .count();
        assert_eq!(plan.assignments().len(), trainable);
        assert_eq!(sizes.iter().sum::<usize>(), trainable);
    }

    #[test]
    fn changing_seed_changes_assignments() {
        let sources: Vec<(String, usize, usize)> = (0..23)
            .map(|i| (format!("src{i:02}"), 1, 3 + i % 5))
            .collect();
        let refs: Vec<(&str, usize, usize)> = sources
            .iter()
            .map(|(s, p, u)| (s.as_str(), *p, *u))
            .collect();
        let ds = dataset_with_sources(&refs);
        let a = make_folds(&ds, 1, 5).unwrap();
        let b = make_folds(&ds, 2, 5).unwrap();
        assert_ne!(a.assignments(), b.assignments());
    }

    #[test]
    fn too_few_sources_and_uncoverable_positives_error() {
        let ds = dataset_with_sources(&[("s0", 1, 5), ("s1", 1, 5), ("s2", 1, 5)]);
        assert!(matches!(
            make_folds(&ds, 3, 5),
            Err(CvError::TooFewSources { needed: 5, available: 3 })
        ));

        // plenty of sources but positives concentrated in two of them
        let ds = dataset_with_sources(&[
            ("p0", 3, 0),
            ("p1", 2, 0),
            ("u0", 0, 5),
            ("u1", 0, 5),
            ("u2", 0, 5),
            ("u3", 0, 5),
            ("u4", 0, 5),
        ]);
        assert!(matches!(
            make_folds(&ds, 3, 5),
            Err(CvError::FoldWithoutPositives { positive_sources: 2, n_folds: 5 })
        ));
    }

    #[test]
    fn bags_are_one_to_one_and_leak_free() {
        let sources: Vec<(String, usize, usize)> = (0..12)
            .map(|i| (format!("src{i:02}"), 2, 12))
            .collect();
        let refs: Vec<(&str, usize, usize)> = sources
            .iter()
            .map(|(s, p, u)| (s.as_str(), *p, *u))
            .collect();
        let ds = dataset_with_sources(&refs);
        let plan = SeedPlan::default_three();
        let folds = make_folds(&ds, plan.fold_seed(0), 5).unwrap();
        let bags = make_bags(&folds, &ds, &plan, 0, 10).unwrap();
        assert_eq!(bags.len(), 50);
        for bag in &bags {
            assert_eq!(bag.positive_ids.len(), bag.unlabeled_ids.len());
            // without replacement within a bag
            let uniq: BTreeSet<_> = bag.unlabeled_ids.iter().collect();
            assert_eq!(uniq.len(), bag.unlabeled_ids.len());
            // all ids from the training side; never negatives
            for id in bag.positive_ids.iter().chain(&bag.unlabeled_ids) {
                let fold = folds.fold_of(id).expect("bag id must be trainable");
                assert_ne!(fold, bag.fold_index, "case {id} leaked into its own fold");
                assert_ne!(ds.get(id).unwrap().label, LabelKind::Negative);
            }
        }
    }

    #[test]
    fn different_bag_indices_sample_differently_on_large_pool() {
        // one big unlabeled pool (10,000), few positives
        let mut sources: Vec<(String, usize, usize)> = (0..10)
            .map(|i| (format!("p{i}"), 1, 0))
            .collect();
        for i in 0..50 {
            sources.push((format!("u{i}"), 0, 200));
        }
        let refs: Vec<(&str, usize, usize)> = sources
            .iter()
            .map(|(s, p, u)| (s.as_str(), *p, *u))
            .collect();
        let ds = dataset_from(
            refs.iter()
                .flat_map(|(src, n_pos, n_unl)| {
                    let src = src.to_string();
                    (0..*n_pos)
                        .map({
                            let src = src.clone();
                            move |k| (src.clone(), LabelKind::Positive, k)
                        })
                        .chain((0..*n_unl).map(move |k| (src.clone(), LabelKind::Unlabeled, k)))
                })
                .enumerate()
                .map(|(n, (src, label, _))| {
                    record_with(&format!("c{n:05}"), label, &src, |fi| fi as f64)
                })
                .collect(),
        );
        let plan = SeedPlan::default_three();
        let folds = make_folds(&ds, plan.fold_seed(0), 5).unwrap();
        let bags = make_bags(&folds, &ds, &plan, 0, 2).unwrap();
        let same_fold: Vec<&BagSpec> = bags.iter().filter(|b| b.fold_index == 0).collect();
        assert_eq!(same_fold.len(), 2);
        assert_ne!(
            same_fold[0].unlabeled_ids, same_fold[1].unlabeled_ids,
            "two bags from a 10,000-case pool should differ"
        );
    }

    #[test]
    fn identical_seed_plan_reproduces_bags_bitwise() {
        let sources: Vec<(String, usize, usize)> = (0..12)
            .map(|i| (format!("src{i:02}"), 1, 8))
            .collect();
        let refs: Vec<(&str, usize, usize)> = sources
            .iter()
            .map(|(s, p, u)| (s.as_str(), *p, *u))
            .collect();
        let ds = dataset_with_sources(&refs);
        let plan = SeedPlan::new(vec![7, 8, 9]);
        let run = || {
            let folds = make_folds(&ds, plan.fold_seed(1), 5).unwrap();
            make_bags(&folds, &ds, &plan, 1, 10).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn not_enough_unlabeled_is_an_error() {
        let ds = dataset_with_sources(&[
            ("s0", 4, 1),
            ("s1", 4, 1),
            ("s2", 4, 1),
            ("s3", 4, 1),
            ("s4", 4, 1),
        ]);
        let plan = SeedPlan::default_three();
        let folds = make_folds(&ds, plan.fold_seed(0), 5).unwrap();
        assert!(matches!(
            make_bags(&folds, &ds, &plan, 0, 10),
            Err(CvError::NotEnoughUnlabeled { .. })
        ));
    }
}
