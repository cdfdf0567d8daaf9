//! Shared helpers for unit tests.

use crate::data::{
    Dataset, FeatureCatalog, FeatureKind, FeatureValue, Gear, LabelKind, Region, VesselYearRecord,
};

/// Build a record against the standard catalog with numeric features filled
/// from `numeric(catalog_index)` and categoricals at their reference level
/// (gear mirrored into the gear feature).
pub(crate) fn record_with(
    case_id: &str,
    label: LabelKind,
    source_id: &str,
    numeric: impl Fn(usize) -> f64,
) -> VesselYearRecord {
    record_full(case_id, label, source_id, Gear::Trawler, Region::Asia, numeric)
}

pub(crate) fn record_full(
    case_id: &str,
    label: LabelKind,
    source_id: &str,
    gear: Gear,
    region: Region,
    numeric: impl Fn(usize) -> f64,
) -> VesselYearRecord {
    let catalog = FeatureCatalog::standard();
    let gear_level = Gear::ALL.iter().position(|g| *g == gear).unwrap() as u8;
    let features = catalog
        .entries()
        .iter()
        .enumerate()
        .map(|(fi, spec)| match &spec.kind {
            FeatureKind::Numeric => FeatureValue::Numeric(numeric(fi)),
            FeatureKind::Categorical { .. } => {
                if spec.name == "fishing_gear_type" {
                    FeatureValue::Categorical(gear_level)
                } else {
                    FeatureValue::Categorical(0)
                }
            }
        })
        .collect();
    VesselYearRecord {
        case_id: case_id.to_string(),
        year: 2019,
        label,
        source_id: source_id.to_string(),
        gear,
        region,
        features,
    }
}

pub(crate) fn dataset_from(records: Vec<VesselYearRecord>) -> Dataset {
    Dataset::new(FeatureCatalog::standard(), records).unwrap()
}

/// Independent oracle for the regularized incomplete beta: Simpson
/// quadrature under the x = sin^2(theta) substitution, which removes the
/// endpoint singularities for a, b >= 0.5. Self-normalizing, so it shares
/// no code path (and no gamma function) with the implementation.
pub(crate) fn inc_beta_quadrature(a: f64, b: f64, t: f64) -> f64 {
    fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut sum = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(lo + i as f64 * h);
        }
        sum * h / 3.0
    }
    let integrand =
        |theta: f64| 2.0 * theta.sin().powf(2.0 * a - 1.0) * theta.cos().powf(2.0 * b - 1.0);
    let n = 50_000;
    let upper = t.clamp(0.0, 1.0).sqrt().asin();
    let partial = simpson(0.0, upper, n, integrand);
    let full = simpson(0.0, std::f64::consts::FRAC_PI_2, n, integrand);
    partial / full
}
