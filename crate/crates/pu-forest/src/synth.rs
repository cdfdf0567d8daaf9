//! Synthetic PU datasets with known ground truth, for verifying the whole
//! pipeline: a two-component Gaussian mixture with a configurable standard-
//! ized mean gap per informative coordinate, a known positive share in the
//! unlabeled pool, and a truth map emitted separately so pipeline code can
//! never consume it by accident.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{
    Dataset, FeatureCatalog, FeatureKind, FeatureValue, Gear, LabelKind, Region, VesselYearRecord,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleConfig(String),
}

/// Ground truth of a synthetic case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    TruePositive,
    TrueNegative,
}

impl Truth {
    pub fn as_str(&self) -> &'static str {
        match self {
            Truth::TruePositive => "true_positive",
            Truth::TrueNegative => "true_negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "true_positive" => Some(Truth::TruePositive),
            "true_negative" => Some(Truth::TrueNegative),
            _ => None,
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Generator configuration.
///
/// `true_alpha` is the positive share of the unlabeled pool and
/// `label_fraction` the share of all true positives revealed as labeled.
/// `separation` is the mean gap between the two components on each of the
/// `n_features` informative coordinates, in units of the (unit) coordinate
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_total: usize,
    pub true_alpha: f64,
    pub label_fraction: f64,
    pub separation: f64,
    pub n_features: usize,
    pub n_sources: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_total: 2000,
            true_alpha: 0.3,
            label_fraction: 0.5,
            separation: 2.0,
            n_features: 5,
            n_sources: 40,
            seed: 7,
        }
    }
}

/// Derived exact counts for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthCounts {
    pub n_true_positive: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_unlabeled_true_positive: usize,
}

impl SynthConfig {
    /// Solve for the total true-positive count so that the unlabeled pool
    /// carries `true_alpha` positives after revealing `label_fraction` of
    /// all positives: `P = alpha * n / (1 - (1 - alpha) * lf)`.
    pub fn counts(&self) -> Result<SynthCounts, SynthError> {
        let n = self.n_total as f64;
        let denom = 1.0 - (1.0 - self.true_alpha) * self.label_fraction;
        let p_total = (self.true_alpha * n / denom).round() as usize;
        let n_labeled = ((self.label_fraction * p_total as f64).round() as usize).max(1);
        if n_labeled > p_total {
            return Err(SynthError::InfeasibleConfig(
                "labeled positives exceed true positives".into(),
            ));
        }
        let n_unlabeled = self.n_total.saturating_sub(n_labeled);
        let n_unl_pos = p_total - n_labeled;
        if p_total == 0 || p_total >= self.n_total {
            return Err(SynthError::InfeasibleConfig(format!(
                "true-positive count {p_total} leaves no room in n_total {}",
                self.n_total
            )));
        }
        if n_unl_pos > n_unlabeled {
            return Err(SynthError::InfeasibleConfig(
                "unlabeled pool smaller than its positive share".into(),
            ));
        }
        Ok(SynthCounts {
            n_true_positive: p_total,
            n_labeled,
            n_unlabeled,
            n_unlabeled_true_positive: n_unl_pos,
        })
    }

    fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::InfeasibleConfig(m.into()));
        if self.n_total < 4 {
            return err("n_total must be at least 4");
        }
        if !(self.true_alpha > 0.0 && self.true_alpha < 1.0) {
            return err("true_alpha must be in (0, 1)");
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return err("label_fraction must be in (0, 1]");
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return err("separation must be a finite non-negative number");
        }
        let n_numeric = FeatureCatalog::standard().numeric_indices().len();
        if self.n_features == 0 || self.n_features > n_numeric {
            return Err(SynthError::InfeasibleConfig(format!(
                "n_features must be in 1..={n_numeric}"
            )));
        }
        if self.n_sources == 0 || self.n_sources > self.n_total {
            return err("n_sources must be in 1..=n_total");
        }
        Ok(())
    }
}

/// Generate a synthetic dataset plus its truth map. Identical configs give
/// bitwise-identical output.
pub fn generate(
    config: &SynthConfig,
) -> Result<(Dataset, BTreeMap<String, Truth>), SynthError> {
    config.validate()?;
    let counts = config.counts()?;
    let catalog = FeatureCatalog::standard();
    let numeric = catalog.numeric_indices();
    let informative: Vec<usize> = numeric[..config.n_features].to_vec();
    let width = format!("{}", config.n_total - 1).len().max(4);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // cases 0..P are true positives; reveal a random subset as labeled
    let labeled_pick = rand::seq::index::sample(
        &mut rng,
        counts.n_true_positive,
        counts.n_labeled,
    );
    let mut labeled = vec![false; config.n_total];
    for i in labeled_pick.iter() {
        labeled[i] = true;
    }

    // shuffled round-robin assignment of sources and grouping fields
    let mut order: Vec<usize> = (0..config.n_total).collect();
    order.shuffle(&mut rng);
    let mut source_of = vec![0usize; config.n_total];
    let mut slot_of = vec![0usize; config.n_total];
    for (k, &case) in order.iter().enumerate() {
        source_of[case] = k % config.n_sources;
        slot_of[case] = k;
    }

    let gear_index = catalog.index_of("fishing_gear_type").expect("catalog");
    let mut records = Vec::with_capacity(config.n_total);
    let mut truth = BTreeMap::new();
    for i in 0..config.n_total {
        let is_true_positive = i < counts.n_true_positive;
        let label = if is_true_positive && labeled[i] {
            LabelKind::Positive
        } else {
            LabelKind::Unlabeled
        };
        let slot = slot_of[i];
        let gear = Gear::ALL[slot % 4];
        let region = Region::ALL[(slot / 4) % 2];
        let gear_level = (slot % 4) as u8;

        let mut features = Vec::with_capacity(catalog.len());
        for (fi, spec) in catalog.entries().iter().enumerate() {
            match &spec.kind {
                FeatureKind::Numeric => {
                    let z: f64 = rng.sample(StandardNormal);
                    let shift = if is_true_positive && informative.contains(&fi) {
                        config.separation
                    } else {
                        0.0
                    };
                    features.push(FeatureValue::Numeric(z + shift));
                }
                FeatureKind::Categorical { allowed } => {
                    let level = if fi == gear_index {
                        gear_level
                    } else {
                        (slot % allowed.len()) as u8
                    };
                    features.push(FeatureValue::Categorical(level));
                }
            }
        }

        let case_id = format!("case_{i:0width$}");
        truth.insert(
            case_id.clone(),
            if is_true_positive {
                Truth::TruePositive
            } else {
                Truth::TrueNegative
            },
        );
        records.push(VesselYearRecord {
            case_id,
            year: 2012 + (slot % 9) as i32,
            label,
            source_id: format!("src_{:03}", source_of[i]),
            gear,
            region,
            features,
        });
    }

    let dataset = Dataset::new(catalog, records)
        .map_err(|e| SynthError::InfeasibleConfig(format!("generated invalid dataset: {e}")))?;
    Ok((dataset, truth))
}

/// Write `truth.csv`: case_id, truth.
pub fn write_truth_csv(
    truth: &BTreeMap<String, Truth>,
    path: &Path,
) -> Result<(), std::io::Error> {
    let mut out = String::from("case_id,truth\n");
    for (case_id, t) in truth {
        out.push_str(case_id);
        out.push(',');
        out.push_str(t.as_str());
        out.push('\n');
    }
    std::fs::write(path, out)
}
