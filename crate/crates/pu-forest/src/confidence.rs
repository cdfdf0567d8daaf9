//! Per-case classification and confidence: a Beta distribution is fitted to
//! the case's score vector by the method of moments, and the confidence is
//! the fitted tail mass on the classified side of the threshold.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::betainc::inc_beta;
use crate::data::Gear;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("beta fit requires at least 2 scores, got {n}")]
    TooFewScores { n: usize },
}

/// Predicted class; a case is positive iff its average score exceeds the
/// calibrated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Positive,
    Negative,
}

impl Class {
    pub fn as_str(&self) -> &'static str {
        match self {
            Class::Positive => "positive",
            Class::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Class::Positive),
            "negative" => Some(Class::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Method-of-moments Beta fit, or a degenerate marker when the score vector
/// has (numerically) zero variance or violates the moment condition
/// `v < m(1-m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaFit {
    Fitted { a: f64, b: f64 },
    Degenerate,
}

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Fit Beta shape parameters to scores in [0, 1] by matching mean and
/// sample variance: with `c = m(1-m)/v - 1`, `a = m c` and `b = (1-m) c`.
pub fn fit_beta(scores: &[f64]) -> Result<BetaFit, ConfidenceError> {
    let n = scores.len();
    if n < 2 {
        return Err(ConfidenceError::TooFewScores { n });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n as f64 - 1.0);
    let mm = mean * (1.0 - mean);
    if var < DEGENERATE_VARIANCE || var >= mm {
        return Ok(BetaFit::Degenerate);
    }
    let c = mm / var - 1.0;
    Ok(BetaFit::Fitted {
        a: mean * c,
        b: (1.0 - mean) * c,
    })
}

/// One classified case with its confidence level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub case_id: String,
    pub avg_score: f64,
    pub class: Class,
    pub beta: BetaFit,
    /// P(Y > t) under the fitted Beta if positive, P(Y < t) if negative.
    pub confidence: f64,
}

/// Classify one case by its average score against threshold `t` and attach
/// the Beta-tail confidence.
///
/// Degenerate fits get confidence 1.0 when every score lies strictly on the
/// classified side of `t`, and 0.5 otherwise.
pub fn classify_with_confidence(
    case_id: &str,
    scores: &[f64],
    avg_score: f64,
    t: f64,
) -> Result<Prediction, ConfidenceError> {
    let class = if avg_score > t {
        Class::Positive
    } else {
        Class::Negative
    };
    let beta = fit_beta(scores)?;
    let confidence = match beta {
        BetaFit::Fitted { a, b } => {
            let below = inc_beta(a, b, t);
            match class {
                Class::Positive => 1.0 - below,
                Class::Negative => below,
            }
        }
        BetaFit::Degenerate => {
            let all_on_side = match class {
                Class::Positive => scores.iter().all(|&s| s > t),
                Class::Negative => scores.iter().all(|&s| s < t),
            };
            if all_on_side {
                1.0
            } else {
                0.5
            }
        }
    };
    Ok(Prediction {
        case_id: case_id.to_string(),
        avg_score,
        class,
        beta,
        confidence,
    })
}

/// Counts of high-confidence predictions per (gear, class) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BucketCell {
    pub above_cutoff: usize,
    pub total: usize,
}

impl BucketCell {
    /// Percentage of this cell's predictions above the cutoff.
    pub fn pct(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.above_cutoff as f64 / self.total as f64)
    }
}

/// Per-(gear, class) counts of predictions whose confidence exceeds the
/// cutoff, plus per-class totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConfidenceBucketTable {
    pub cutoff: f64,
    cells: BTreeMap<Class, BTreeMap<Gear, BucketCell>>,
    totals: BTreeMap<Class, BucketCell>,
}

impl ConfidenceBucketTable {
    pub fn cell(&self, gear: Gear, class: Class) -> BucketCell {
        self.cells
            .get(&class)
            .and_then(|m| m.get(&gear))
            .copied()
            .unwrap_or_default()
    }

    pub fn total(&self, class: Class) -> BucketCell {
        self.totals.get(&class).copied().unwrap_or_default()
    }
}

/// Tabulate high-confidence prediction counts per gear and class from
/// (gear, class, confidence) triples.
pub fn confidence_buckets(items: &[(Gear, Class, f64)], cutoff: f64) -> ConfidenceBucketTable {
    let mut table = ConfidenceBucketTable {
        cutoff,
        ..Default::default()
    };
    for (gear, class, confidence) in items {
        let cell = table
            .cells
            .entry(*class)
            .or_default()
            .entry(*gear)
            .or_default();
        cell.total += 1;
        let total = table.totals.entry(*class).or_default();
        total.total += 1;
        if *confidence > cutoff {
            cell.above_cutoff += 1;
            total.above_cutoff += 1;
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    #[test]
    fn uniform_moments_fit_beta_one_one() {
        // two points at 0.5 +- d with 2d^2 = 1/12 give mean 1/2, sample
        // variance 1/12: the moments of Uniform[0,1] = Beta(1,1)
        let d = (1.0f64 / 24.0).sqrt();
        let fit = fit_beta(&[0.5 - d, 0.5 + d]).unwrap();
        match fit {
            BetaFit::Fitted { a, b } => {
                assert!((a - 1.0).abs() < 1e-12, "a = {a}");
                assert!((b - 1.0).abs() < 1e-12, "b = {b}");
            }
            BetaFit::Degenerate => panic!("unexpected degenerate fit"),
        }
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let fit = fit_beta(&[0.9; 30]).unwrap();
        assert_eq!(fit, BetaFit::Degenerate);
        assert!(matches!(
            fit_beta(&[0.5]),
            Err(ConfidenceError::TooFewScores { n: 1 })
        ));
    }

    #[test]
    fn beta_8_2_samples_recover_parameters_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let dist = rand_distr::Beta::new(8.0, 2.0).unwrap();
        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        let reps = 100;
        for _ in 0..reps {
            let scores: Vec<f64> = (0..30).map(|_| dist.sample(&mut rng)).collect();
            match fit_beta(&scores).unwrap() {
                BetaFit::Fitted { a, b } => {
                    sum_a += a;
                    sum_b += b;
                }
                BetaFit::Degenerate => panic!("30 Beta(8,2) draws should not be degenerate"),
            }
        }
        let (ma, mb) = (sum_a / reps as f64, sum_b / reps as f64);
        assert!((ma - 8.0).abs() < 0.3 * 8.0, "mean fitted a = {ma}");
        assert!((mb - 2.0).abs() < 0.3 * 2.0, "mean fitted b = {mb}");
    }

    #[test]
    fn degenerate_all_above_threshold_has_full_confidence() {
        let scores = [0.9; 30];
        let p = classify_with_confidence("c", &scores, 0.9, 0.5).unwrap();
        assert_eq!(p.class, Class::Positive);
        assert_eq!(p.beta, BetaFit::Degenerate);
        assert_eq!(p.confidence, 1.0);

        // straddling threshold: fall back to 0.5
        let mixed = [0.4, 0.4, 0.6, 0.6];
        let p = classify_with_confidence("c", &mixed, 0.5, 0.5).unwrap();
        if p.beta == BetaFit::Degenerate {
            assert_eq!(p.confidence, 0.5);
        }
    }

    #[test]
    fn symmetric_beta_at_half_threshold_gives_half_confidence() {
        // sample vectors whose fit lands on a = b by construction: symmetric
        // scores around 0.5
        let scores: Vec<f64> = vec![0.3, 0.7, 0.4, 0.6, 0.45, 0.55, 0.35, 0.65];
        match fit_beta(&scores).unwrap() {
            BetaFit::Fitted { a, b } => assert!((a - b).abs() < 1e-12),
            BetaFit::Degenerate => panic!(),
        }
        let pos = classify_with_confidence("c", &scores, 0.51, 0.5).unwrap();
        assert!((pos.confidence - 0.5).abs() < 1e-12);
        let neg = classify_with_confidence("c", &scores, 0.49, 0.5).unwrap();
        assert!((neg.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confidence_matches_quadrature_of_fitted_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dist = rand_distr::Beta::new(8.0, 2.0).unwrap();
        let scores: Vec<f64> = (0..30).map(|_| dist.sample(&mut rng)).collect();
        let avg = scores.iter().sum::<f64>() / 30.0;
        let p = classify_with_confidence("c", &scores, avg, 0.5).unwrap();
        let BetaFit::Fitted { a, b } = p.beta else {
            panic!()
        };
        let below = crate::testutil::inc_beta_quadrature(a, b, 0.5);
        let want = match p.class {
            Class::Positive => 1.0 - below,
            Class::Negative => below,
        };
        assert!((p.confidence - want).abs() < 1e-6);
    }

    #[test]
    fn positive_and_negative_side_confidences_sum_to_one() {
        let scores: Vec<f64> = vec![0.2, 0.35, 0.5, 0.6, 0.75, 0.3, 0.45, 0.55];
        let avg = scores.iter().sum::<f64>() / scores.len() as f64;
        for t in [0.2, 0.4, 0.6, 0.8] {
            let p = classify_with_confidence("c", &scores, avg, t).unwrap();
            let flipped = match p.class {
                Class::Positive => classify_with_confidence("c", &scores, t - 1e-9, t).unwrap(),
                Class::Negative => classify_with_confidence("c", &scores, t + 1e-9, t).unwrap(),
            };
            assert!((p.confidence + flipped.confidence - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_confidence_weakly_decreases_in_threshold() {
        let scores: Vec<f64> = vec![0.6, 0.7, 0.8, 0.65, 0.75, 0.85, 0.7, 0.72];
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let t = 0.05 + 0.04 * i as f64;
            let p = classify_with_confidence("c", &scores, 1.0, t).unwrap();
            assert_eq!(p.class, Class::Positive);
            assert!(p.confidence <= prev + 1e-12);
            prev = p.confidence;
        }
    }

    #[test]
    fn buckets_match_counting_oracle_and_published_shape() {
        // shape mirroring reported squid-jigger counts: 5,607 positives of
        // which 5,305 have confidence above 0.8
        let items: Vec<(Gear, Class, f64)> = (0..5607)
            .map(|i| {
                let confidence = if i < 5305 { 0.95 } else { 0.6 };
                (Gear::SquidJigger, Class::Positive, confidence)
            })
            .collect();
        let table = confidence_buckets(&items, 0.8);
        let cell = table.cell(Gear::SquidJigger, Class::Positive);
        assert_eq!(cell.above_cutoff, 5305);
        assert_eq!(cell.total, 5607);
        assert!((cell.pct().unwrap() - 94.6).abs() < 0.05);

        // direct filter-and-count oracle
        let oracle = items.iter().filter(|(_, _, c)| *c > 0.8).count();
        assert_eq!(cell.above_cutoff, oracle);

        // all confidences 1.0 -> every bucket at 100%
        let sure: Vec<(Gear, Class, f64)> = items
            .iter()
            .map(|(g, c, _)| (*g, *c, 1.0))
            .collect();
        let table = confidence_buckets(&sure, 0.8);
        assert_eq!(
            table.cell(Gear::SquidJigger, Class::Positive).pct(),
            Some(100.0)
        );
        assert_eq!(table.total(Class::Positive).above_cutoff, 5607);
    }
}
