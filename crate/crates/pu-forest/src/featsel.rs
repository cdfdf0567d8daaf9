//! Per-bag predictor filtering: drop numeric features with computationally
//! zero variance, then break up highly correlated numeric pairs until every
//! retained pair has |Pearson correlation| below the threshold.
//!
//! Categorical features are exempt from both filters and always retained.

use thiserror::Error;

use crate::data::{FeatureCatalog, FeatureValue, VesselYearRecord};

/// Default correlation threshold: pairs at or above this are broken up.
pub const DEFAULT_CORR_THRESHOLD: f64 = 0.75;

/// Relative variance below this counts as computationally zero.
const REL_VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("feature selection requires at least 2 rows, got {n}")]
    TooFewRows { n: usize },
}

/// Outcome of per-bag feature selection.
///
/// `kept`, `dropped_zero_variance`, and the dropped side of
/// `dropped_correlated` partition the numeric feature names; categorical
/// features always appear in `kept`. All lists follow catalog order of the
/// affected feature.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SelectionMask {
    pub kept: Vec<String>,
    pub dropped_zero_variance: Vec<String>,
    /// (dropped feature, partner that triggered the drop, their correlation).
    pub dropped_correlated: Vec<(String, String, f64)>,
}

impl SelectionMask {
    /// Catalog indices of the retained numeric features, in catalog order.
    pub fn kept_numeric_indices(&self, catalog: &FeatureCatalog) -> Vec<usize> {
        catalog
            .numeric_indices()
            .into_iter()
            .filter(|&i| {
                let name = catalog.entries()[i].name;
                self.kept.iter().any(|k| k == name)
            })
            .collect()
    }
}

/// Column statistics over the canonicalized rows.
struct ColumnStats {
    mean: f64,
    /// Sample variance (n-1 denominator).
    variance: f64,
    /// Mean of squared values, used for the relative zero-variance test.
    mean_square: f64,
}

fn column_stats(values: &[f64]) -> ColumnStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let mean_square = values.iter().map(|v| v * v).sum::<f64>() / n;
    ColumnStats {
        mean,
        variance: ss / (n - 1.0),
        mean_square,
    }
}

fn pearson(x: &[f64], y: &[f64], sx: &ColumnStats, sy: &ColumnStats) -> f64 {
    let n = x.len() as f64;
    let cov: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - sx.mean) * (b - sy.mean))
        .sum::<f64>()
        / (n - 1.0);
    let denom = (sx.variance * sy.variance).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    }
}

/// Select the numeric predictors to keep for one training bag.
///
/// Zero-variance features (sample variance at most `1e-12` times the mean
/// square of the column) are dropped first. Then, repeatedly, the pair with
/// the largest |correlation| at or above `corr_threshold` is found and the
/// member with the larger mean absolute correlation to all other remaining
/// numeric features is dropped; ties drop the feature later in catalog
/// order. Deterministic and invariant to row order: rows are canonicalized
/// by sorting before any statistic is computed.
pub fn select_features(
    rows: &[&VesselYearRecord],
    catalog: &FeatureCatalog,
    corr_threshold: f64,
) -> Result<SelectionMask, SelectError> {
    if rows.len() < 2 {
        return Err(SelectError::TooFewRows { n: rows.len() });
    }
    let numeric = catalog.numeric_indices();

    // Extract numeric columns row-major, then canonicalize row order so the
    // mask does not depend on how the caller ordered the bag.
    let mut matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            numeric
                .iter()
                .map(|&fi| match r.features[fi] {
                    FeatureValue::Numeric(v) => v,
                    FeatureValue::Categorical(_) => unreachable!("numeric index"),
                })
                .collect()
        })
        .collect();
    matrix.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let columns: Vec<Vec<f64>> = (0..numeric.len())
        .map(|c| matrix.iter().map(|row| row[c]).collect())
        .collect();
    let stats: Vec<ColumnStats> = columns.iter().map(|c| column_stats(c)).collect();

    let mut dropped_zero_variance = Vec::new();
    let mut active: Vec<usize> = Vec::new(); // indices into `numeric`/`columns`
    for (c, s) in stats.iter().enumerate() {
        if s.variance <= REL_VARIANCE_EPS * s.mean_square {
            dropped_zero_variance.push(catalog.entries()[numeric[c]].name.to_string());
        } else {
            active.push(c);
        }
    }

    // Full correlation matrix over surviving columns (symmetric, unit diag).
    let m = numeric.len();
    let mut corr = vec![0.0f64; m * m];
    for (ai, &i) in active.iter().enumerate() {
        for &j in active.iter().skip(ai + 1) {
            let r = pearson(&columns[i], &columns[j], &stats[i], &stats[j]);
            corr[i * m + j] = r;
            corr[j * m + i] = r;
        }
    }

    let mut dropped_correlated = Vec::new();
    loop {
        // Pair with the largest |corr| at or above the threshold; ties keep
        // the lexicographically first (i, j) in catalog order.
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in active.iter().skip(ai + 1) {
                let r = corr[i * m + j];
                if r.abs() >= corr_threshold && best.map_or(true, |(_, _, b)| r.abs() > b.abs()) {
                    best = Some((i, j, r));
                }
            }
        }
        let Some((i, j, r)) = best else { break };

        let mean_abs = |c: usize| -> f64 {
            let others: Vec<f64> = active
                .iter()
                .filter(|&&k| k != c)
                .map(|&k| corr[c * m + k].abs())
                .collect();
            if others.is_empty() {
                0.0
            } else {
                others.iter().sum::<f64>() / others.len() as f64
            }
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        // Drop the member more correlated with everything else; on an exact
        // tie drop the later feature in catalog order (j > i here).
        let drop = if mi > mj {
            i
        } else if mj > mi {
            j
        } else {
            j
        };
        let partner = if drop == i { j } else { i };
        dropped_correlated.push((
            catalog.entries()[numeric[drop]].name.to_string(),
            catalog.entries()[numeric[partner]].name.to_string(),
            r,
        ));
        active.retain(|&k| k != drop);
    }

    let kept_numeric: Vec<&str> = active
        .iter()
        .map(|&c| catalog.entries()[numeric[c]].name)
        .collect();
    let kept = catalog
        .entries()
        .iter()
        .filter(|e| !e.is_numeric() || kept_numeric.contains(&e.name))
        .map(|e| e.name.to_string())
        .collect();

    Ok(SelectionMask {
        kept,
        dropped_zero_variance,
        dropped_correlated,
    })
}
