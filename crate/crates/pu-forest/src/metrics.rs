//! Accuracy and fairness reporting: recall over the labeled positives,
//! specificity over the certified negatives, prediction-share tables, and
//! the per-(gear, region) recall grid.
//!
//! Cells with a zero denominator are reported as absent, never as 0 or 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::confidence::{confidence_buckets, Class, ConfidenceBucketTable};
use crate::data::{Gear, LabelKind, Region};

/// One classified case joined with its known label and fairness groups.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedCase {
    pub case_id: String,
    pub label: LabelKind,
    pub gear: Gear,
    pub region: Region,
    pub class: Class,
    pub confidence: f64,
}

/// A ratio metric with its denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: f64,
    pub n: usize,
}

/// Optional restriction of a metric to a (gear, region) group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupFilter {
    pub gear: Option<Gear>,
    pub region: Option<Region>,
}

impl GroupFilter {
    fn accepts(&self, case: &EvaluatedCase) -> bool {
        self.gear.is_none_or(|g| g == case.gear) && self.region.is_none_or(|r| r == case.region)
    }
}

/// Recall = TP / (TP + FN) over Positive-labeled cases in the group, or
/// `None` when the group has no positives.
pub fn compute_recall(cases: &[EvaluatedCase], filter: &GroupFilter) -> Option<Metric> {
    let mut n = 0usize;
    let mut tp = 0usize;
    for case in cases.iter().filter(|c| filter.accepts(c)) {
        if case.label == LabelKind::Positive {
            n += 1;
            if case.class == Class::Positive {
                tp += 1;
            }
        }
    }
    (n > 0).then(|| Metric {
        value: tp as f64 / n as f64,
        n,
    })
}

/// Specificity = TN / (TN + FP) over Negative-labeled cases in the group,
/// or `None` when the group has no negatives.
pub fn compute_specificity(cases: &[EvaluatedCase], filter: &GroupFilter) -> Option<Metric> {
    let mut n = 0usize;
    let mut tn = 0usize;
    for case in cases.iter().filter(|c| filter.accepts(c)) {
        if case.label == LabelKind::Negative {
            n += 1;
            if case.class == Class::Negative {
                tn += 1;
            }
        }
    }
    (n > 0).then(|| Metric {
        value: tn as f64 / n as f64,
        n,
    })
}

/// Prediction counts per gear and class, with gear-column totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PredictionShareTable {
    cells: BTreeMap<Class, BTreeMap<Gear, usize>>,
    gear_totals: BTreeMap<Gear, usize>,
    class_totals: BTreeMap<Class, usize>,
    pub total: usize,
}

impl PredictionShareTable {
    pub fn count(&self, gear: Gear, class: Class) -> usize {
        self.cells
            .get(&class)
            .and_then(|m| m.get(&gear))
            .copied()
            .unwrap_or(0)
    }

    pub fn gear_total(&self, gear: Gear) -> usize {
        self.gear_totals.get(&gear).copied().unwrap_or(0)
    }

    pub fn class_total(&self, class: Class) -> usize {
        self.class_totals.get(&class).copied().unwrap_or(0)
    }

    /// Column percentage of a cell within its gear.
    pub fn pct(&self, gear: Gear, class: Class) -> Option<f64> {
        let total = self.gear_total(gear);
        (total > 0).then(|| 100.0 * self.count(gear, class) as f64 / total as f64)
    }

    pub fn class_pct(&self, class: Class) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.class_total(class) as f64 / self.total as f64)
    }
}

/// Count predictions per gear and class over all evaluated cases.
pub fn prediction_share_table(cases: &[EvaluatedCase]) -> PredictionShareTable {
    let mut table = PredictionShareTable::default();
    for case in cases {
        *table
            .cells
            .entry(case.class)
            .or_default()
            .entry(case.gear)
            .or_default() += 1;
        *table.gear_totals.entry(case.gear).or_default() += 1;
        *table.class_totals.entry(case.class).or_default() += 1;
        table.total += 1;
    }
    table
}

/// Recall for one gear across flag regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallRow {
    pub asia: Option<Metric>,
    pub other: Option<Metric>,
    pub global: Option<Metric>,
}

/// The full accuracy-and-fairness report.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessReport {
    pub global_recall: Option<Metric>,
    pub global_specificity: Option<Metric>,
    pub recall_by_gear: BTreeMap<Gear, RecallRow>,
    pub recall_all_gears: RecallRow,
    pub shares: PredictionShareTable,
    pub buckets: ConfidenceBucketTable,
}

/// Compose every table of the report from the evaluated cases.
pub fn build_report(cases: &[EvaluatedCase], confidence_cutoff: f64) -> FairnessReport {
    let recall_row = |gear: Option<Gear>| RecallRow {
        asia: compute_recall(
            cases,
            &GroupFilter {
                gear,
                region: Some(Region::Asia),
            },
        ),
        other: compute_recall(
            cases,
            &GroupFilter {
                gear,
                region: Some(Region::Other),
            },
        ),
        global: compute_recall(cases, &GroupFilter { gear, region: None }),
    };
    let mut recall_by_gear = BTreeMap::new();
    for gear in Gear::ALL {
        recall_by_gear.insert(gear, recall_row(Some(gear)));
    }
    let items: Vec<(Gear, Class, f64)> = cases
        .iter()
        .map(|c| (c.gear, c.class, c.confidence))
        .collect();
    FairnessReport {
        global_recall: compute_recall(cases, &GroupFilter::default()),
        global_specificity: compute_specificity(cases, &GroupFilter::default()),
        recall_by_gear,
        recall_all_gears: recall_row(None),
        shares: prediction_share_table(cases),
        buckets: confidence_buckets(&items, confidence_cutoff),
    }
}

fn gear_label(gear: Gear) -> &'static str {
    match gear {
        Gear::DriftingLongline => "Longliners",
        Gear::SquidJigger => "Squid jiggers",
        Gear::Trawler => "Trawlers",
        Gear::PurseSeiner => "Purse seiners",
    }
}

fn fmt_metric(m: Option<Metric>) -> String {
    match m {
        Some(m) => format!("{:.2} ({})", m.value, m.n),
        None => "-".to_string(),
    }
}

/// Render the report as markdown tables: predictions per gear, the
/// high-confidence share per gear, and the recall grid.
pub fn render_markdown(report: &FairnessReport) -> String {
    let mut out = String::new();
    let gears = Gear::ALL;
    out.push_str("# Classification report\n\n");

    out.push_str("## Positive and negative predictions for each gear\n\n");
    out.push_str("| | Longliners | Squid jiggers | Trawlers | Purse seiners | Total |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for class in [Class::Positive, Class::Negative] {
        let _ = write!(out, "| {} |", capitalized(class.as_str()));
        for gear in [
            Gear::DriftingLongline,
            Gear::SquidJigger,
            Gear::Trawler,
            Gear::PurseSeiner,
        ] {
            match report.shares.pct(gear, class) {
                Some(pct) => {
                    let _ = write!(out, " {} ({:.1}%) |", report.shares.count(gear, class), pct);
                }
                None => out.push_str(" - |"),
            }
        }
        match report.shares.class_pct(class) {
            Some(pct) => {
                let _ = writeln!(out, " {} ({:.1}%) |", report.shares.class_total(class), pct);
            }
            None => out.push_str(" - |\n"),
        }
    }
    out.push_str("| Total |");
    for gear in [
        Gear::DriftingLongline,
        Gear::SquidJigger,
        Gear::Trawler,
        Gear::PurseSeiner,
    ] {
        let _ = write!(out, " {} |", report.shares.gear_total(gear));
    }
    let _ = writeln!(out, " {} |", report.shares.total);

    let _ = write!(
        out,
        "\n## Predictions by gear with more than {:.0}% confidence\n\n",
        100.0 * report.buckets.cutoff
    );
    out.push_str("| | Longliners | Squid jiggers | Trawlers | Purse seiners | Total |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for class in [Class::Positive, Class::Negative] {
        let _ = write!(out, "| {} |", capitalized(class.as_str()));
        for gear in [
            Gear::DriftingLongline,
            Gear::SquidJigger,
            Gear::Trawler,
            Gear::PurseSeiner,
        ] {
            let cell = report.buckets.cell(gear, class);
            match cell.pct() {
                Some(pct) => {
                    let _ = write!(out, " {} ({:.1}%) |", cell.above_cutoff, pct);
                }
                None => out.push_str(" - |"),
            }
        }
        let total = report.buckets.total(class);
        match total.pct() {
            Some(pct) => {
                let _ = writeln!(out, " {} ({:.1}%) |", total.above_cutoff, pct);
            }
            None => out.push_str(" - |\n"),
        }
    }

    out.push_str("\n## Recall for all categories of gear and regions\n\n");
    out.push_str("| | Asia | All others | Global |\n");
    out.push_str("|---|---:|---:|---:|\n");
    for gear in gears {
        let row = &report.recall_by_gear[&gear];
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            gear_label(gear),
            fmt_metric(row.asia),
            fmt_metric(row.other),
            fmt_metric(row.global),
        );
    }
    let row = &report.recall_all_gears;
    let _ = writeln!(
        out,
        "| All gears | {} | {} | {} |",
        fmt_metric(row.asia),
        fmt_metric(row.other),
        fmt_metric(row.global),
    );

    out.push_str("\n## Overall\n\n");
    let _ = writeln!(out, "- Recall: {}", fmt_metric(report.global_recall));
    let _ = writeln!(
        out,
        "- Specificity: {}",
        fmt_metric(report.global_specificity)
    );
    out
}

fn capitalized(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}
