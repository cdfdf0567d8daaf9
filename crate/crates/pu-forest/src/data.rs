//! Dataset model, feature catalog, and CSV ingestion for vessel-year records.
//!
//! A vessel-year is the unit of classification: one vessel's behavioral and
//! identity summary over one calendar year, carrying a label (positive,
//! negative, or unlabeled), a source grouping key used to prevent leakage
//! across cross-validation folds, and a fixed 29-feature vector.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of predictor features in the standard catalog.
pub const N_FEATURES: usize = 29;

/// Errors raised while loading or validating a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{column}' in header")]
    MissingColumn { column: String },
    #[error("row {row}: unknown label '{value}' (expected positive, negative, or unlabeled)")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}, column '{column}': non-finite or unparseable numeric value '{value}'")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': invalid categorical value '{value}'")]
    InvalidCategoricalValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: duplicate case_id '{case_id}'")]
    DuplicateCaseId { row: usize, case_id: String },
    #[error("row {row}, column '{column}': {message}")]
    InvalidField {
        row: usize,
        column: String,
        message: String,
    },
}

/// Whether a feature is continuous or takes one of a fixed set of levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical { allowed: Vec<&'static str> },
}

/// One entry of the feature catalog: a column name plus its kind.
#[derive(Debug, Clone)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric)
    }
}

/// The ordered list of predictor features. Order is fixed and defines column
/// order in the CSV schema and the design matrix everywhere downstream.
#[derive(Debug, Clone)]
pub struct FeatureCatalog {
    entries: Vec<FeatureSpec>,
}

fn num(name: &'static str) -> FeatureSpec {
    FeatureSpec {
        name,
        kind: FeatureKind::Numeric,
    }
}

fn cat(name: &'static str, allowed: &[&'static str]) -> FeatureSpec {
    FeatureSpec {
        name,
        kind: FeatureKind::Categorical {
            allowed: allowed.to_vec(),
        },
    }
}

/// Gear levels, in catalog order. `drifting_longline` is the one-hot
/// reference level.
pub const GEAR_LEVELS: [&str; 4] = ["drifting_longline", "squid_jigger", "trawler", "purse_seiner"];

static STANDARD_CATALOG: OnceLock<FeatureCatalog> = OnceLock::new();

impl FeatureCatalog {
    /// The standard 29-feature vessel-year catalog: 26 numeric features plus
    /// AIS device type, fishing gear type, and flag-of-convenience status.
    pub fn standard() -> &'static FeatureCatalog {
        STANDARD_CATALOG.get_or_init(|| FeatureCatalog {
            entries: vec![
                cat("ais_device_type", &["A", "B"]),
                num("avg_gap_distance_km"),
                num("avg_distance_from_port_km"),
                num("avg_distance_from_shore_km"),
                num("avg_encounter_duration_h"),
                num("avg_gap_length_days"),
                num("avg_loitering_duration_h"),
                num("avg_daily_fishing_hours"),
                num("avg_voyage_duration_h"),
                num("engine_power_kw"),
                cat("fishing_gear_type", &GEAR_LEVELS),
                cat("flag_of_convenience", &["no", "yes"]),
                num("max_distance_from_port_km"),
                num("max_distance_from_shore_km"),
                num("n_ais_messages"),
                num("n_encounters"),
                num("n_encounters_forced_labor_vessels"),
                num("fishing_hours"),
                num("fishing_hours_foreign_eez"),
                num("fishing_hours_high_seas"),
                num("n_foreign_port_visits"),
                num("n_gaps_12h"),
                num("hours_at_sea"),
                num("n_loitering_events"),
                num("n_port_of_convenience_visits"),
                num("n_voyages"),
                num("tonnage_gt"),
                num("total_distance_km"),
                num("vessel_length_m"),
            ],
        })
    }

    pub fn entries(&self) -> &[FeatureSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of the numeric entries, in catalog order.
    pub fn numeric_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_numeric())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }
}

/// Case label. Negative cases never enter any training bag; they exist only
/// for validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Positive,
    Negative,
    Unlabeled,
}

impl LabelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(LabelKind::Positive),
            "negative" => Some(LabelKind::Negative),
            "unlabeled" => Some(LabelKind::Unlabeled),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::Positive => "positive",
            LabelKind::Negative => "negative",
            LabelKind::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fishing gear, the per-case fairness grouping used alongside flag region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gear {
    DriftingLongline,
    SquidJigger,
    Trawler,
    PurseSeiner,
}

impl Gear {
    pub const ALL: [Gear; 4] = [
        Gear::DriftingLongline,
        Gear::SquidJigger,
        Gear::Trawler,
        Gear::PurseSeiner,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "drifting_longline" => Some(Gear::DriftingLongline),
            "squid_jigger" => Some(Gear::SquidJigger),
            "trawler" => Some(Gear::Trawler),
            "purse_seiner" => Some(Gear::PurseSeiner),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Gear::DriftingLongline => "drifting_longline",
            Gear::SquidJigger => "squid_jigger",
            Gear::Trawler => "trawler",
            Gear::PurseSeiner => "purse_seiner",
        }
    }
}

impl fmt::Display for Gear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Flag region. The public data withholds flag States, so fairness is
/// computed at this two-level granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Asia,
    Other,
}

impl Region {
    pub const ALL: [Region; 2] = [Region::Asia, Region::Other];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "asia" => Some(Region::Asia),
            "other" => Some(Region::Other),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Asia => "asia",
            Region::Other => "other",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single feature value: a finite numeric, or an index into the catalog
/// entry's allowed levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(u8),
}

impl FeatureValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            FeatureValue::Categorical(_) => None,
        }
    }
}

/// One vessel-year: identity, label, source grouping key, fairness groups,
/// and the feature vector in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselYearRecord {
    pub case_id: String,
    pub year: i32,
    pub label: LabelKind,
    pub source_id: String,
    pub gear: Gear,
    pub region: Region,
    pub features: Vec<FeatureValue>,
}

/// A validated collection of vessel-year records sharing one catalog.
///
/// Read-only after construction; safe to share across parallel workers.
#[derive(Debug, Clone)]
pub struct Dataset {
    catalog: &'static FeatureCatalog,
    records: Vec<VesselYearRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Build a dataset from records, validating every invariant: unique
    /// case ids, non-empty source ids, finite numerics, in-range categorical
    /// indices, and feature vectors of catalog length.
    pub fn new(
        catalog: &'static FeatureCatalog,
        records: Vec<VesselYearRecord>,
    ) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(records.len());
        for (row, rec) in records.iter().enumerate() {
            let row = row + 1; // 1-based data rows, header is row 0
            if rec.source_id.is_empty() {
                return Err(DataError::InvalidField {
                    row,
                    column: "source_id".into(),
                    message: "source_id must be non-empty".into(),
                });
            }
            if rec.features.len() != catalog.len() {
                return Err(DataError::InvalidField {
                    row,
                    column: "features".into(),
                    message: format!(
                        "expected {} feature values, got {}",
                        catalog.len(),
                        rec.features.len()
                    ),
                });
            }
            for (spec, value) in catalog.entries().iter().zip(&rec.features) {
                match (&spec.kind, value) {
                    (FeatureKind::Numeric, FeatureValue::Numeric(v)) => {
                        if !v.is_finite() {
                            return Err(DataError::NonFiniteValue {
                                row,
                                column: spec.name.into(),
                                value: v.to_string(),
                            });
                        }
                    }
                    (FeatureKind::Categorical { allowed }, FeatureValue::Categorical(ix)) => {
                        if *ix as usize >= allowed.len() {
                            return Err(DataError::InvalidCategoricalValue {
                                row,
                                column: spec.name.into(),
                                value: format!("index {ix}"),
                            });
                        }
                    }
                    _ => {
                        return Err(DataError::InvalidField {
                            row,
                            column: spec.name.into(),
                            message: "feature value kind does not match catalog".into(),
                        });
                    }
                }
            }
            if index.insert(rec.case_id.clone(), row - 1).is_some() {
                return Err(DataError::DuplicateCaseId {
                    row,
                    case_id: rec.case_id.clone(),
                });
            }
        }
        Ok(Dataset {
            catalog,
            records,
            index,
        })
    }

    pub fn catalog(&self) -> &'static FeatureCatalog {
        self.catalog
    }

    pub fn records(&self) -> &[VesselYearRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&VesselYearRecord> {
        self.index.get(case_id).map(|&i| &self.records[i])
    }

    pub fn record_index(&self, case_id: &str) -> Option<usize> {
        self.index.get(case_id).copied()
    }
}

fn header_positions(headers: &csv::StringRecord) -> HashMap<&str, usize> {
    headers.iter().enumerate().map(|(i, h)| (h, i)).collect()
}

/// Metadata columns preceding the feature columns in the CSV schema.
const META_COLUMNS: [&str; 6] = ["case_id", "year", "label", "source_id", "gear", "region"];

/// Load and validate a vessel-year dataset from a CSV file.
///
/// The header must contain the six metadata columns
/// `case_id,year,label,source_id,gear,region` followed by the 29 feature
/// columns in catalog order. Row order is preserved.
pub fn load_dataset(path: &Path, catalog: &'static FeatureCatalog) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let pos = header_positions(&headers);

    for col in META_COLUMNS {
        if !pos.contains_key(col) {
            return Err(DataError::MissingColumn { column: col.into() });
        }
    }
    let mut feature_pos = Vec::with_capacity(catalog.len());
    for spec in catalog.entries() {
        match pos.get(spec.name) {
            Some(&i) => feature_pos.push(i),
            None => {
                return Err(DataError::MissingColumn {
                    column: spec.name.into(),
                })
            }
        }
    }
    let col = |record: &csv::StringRecord, name: &str| -> String {
        record.get(pos[name]).unwrap_or("").to_string()
    };

    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let record = result?;
        let case_id = col(&record, "case_id");
        let year_raw = col(&record, "year");
        let year = year_raw
            .trim()
            .parse::<i32>()
            .map_err(|e| DataError::InvalidField {
                row,
                column: "year".into(),
                message: format!("cannot parse '{year_raw}' as integer: {e}"),
            })?;
        let label_raw = col(&record, "label");
        let label = LabelKind::parse(&label_raw).ok_or_else(|| DataError::UnknownLabel {
            row,
            value: label_raw.clone(),
        })?;
        let source_id = col(&record, "source_id");
        if source_id.is_empty() {
            return Err(DataError::InvalidField {
                row,
                column: "source_id".into(),
                message: "source_id must be non-empty".into(),
            });
        }
        let gear_raw = col(&record, "gear");
        let gear = Gear::parse(&gear_raw).ok_or_else(|| DataError::InvalidCategoricalValue {
            row,
            column: "gear".into(),
            value: gear_raw.clone(),
        })?;
        let region_raw = col(&record, "region");
        let region =
            Region::parse(&region_raw).ok_or_else(|| DataError::InvalidCategoricalValue {
                row,
                column: "region".into(),
                value: region_raw.clone(),
            })?;

        let mut features = Vec::with_capacity(catalog.len());
        for (spec, &ci) in catalog.entries().iter().zip(&feature_pos) {
            let raw = record.get(ci).unwrap_or("");
            match &spec.kind {
                FeatureKind::Numeric => {
                    let v = raw.trim().parse::<f64>().ok().filter(|v| v.is_finite());
                    match v {
                        Some(v) => features.push(FeatureValue::Numeric(v)),
                        None => {
                            return Err(DataError::NonFiniteValue {
                                row,
                                column: spec.name.into(),
                                value: raw.into(),
                            })
                        }
                    }
                }
                FeatureKind::Categorical { allowed } => {
                    match allowed.iter().position(|a| *a == raw) {
                        Some(ix) => features.push(FeatureValue::Categorical(ix as u8)),
                        None => {
                            return Err(DataError::InvalidCategoricalValue {
                                row,
                                column: spec.name.into(),
                                value: raw.into(),
                            })
                        }
                    }
                }
            }
        }

        records.push(VesselYearRecord {
            case_id,
            year,
            label,
            source_id,
            gear,
            region,
            features,
        });
        // Duplicate detection happens in Dataset::new, but reporting the row
        // here keeps the error message pointing at the second occurrence.
    }

    Dataset::new(catalog, records)
}

/// Write a dataset back to CSV in the exact input schema. Numeric values are
/// serialized with the shortest decimal form that round-trips to the same
/// f64, so `load(write(d)) == d` bitwise.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);
    let catalog = dataset.catalog();
    let mut header: Vec<&str> = META_COLUMNS.to_vec();
    header.extend(catalog.entries().iter().map(|e| e.name));
    writer.write_record(&header)?;
    for rec in dataset.records() {
        let mut fields: Vec<String> = vec![
            rec.case_id.clone(),
            rec.year.to_string(),
            rec.label.as_str().into(),
            rec.source_id.clone(),
            rec.gear.as_str().into(),
            rec.region.as_str().into(),
        ];
        for (spec, value) in catalog.entries().iter().zip(&rec.features) {
            match (value, &spec.kind) {
                (FeatureValue::Numeric(v), _) => fields.push(v.to_string()),
                (FeatureValue::Categorical(ix), FeatureKind::Categorical { allowed }) => {
                    fields.push(allowed[*ix as usize].into())
                }
                (FeatureValue::Categorical(_), FeatureKind::Numeric) => unreachable!(),
            }
        }
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Per-label counts within one (gear, region) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.unlabeled
    }

    fn bump(&mut self, label: LabelKind) {
        match label {
            LabelKind::Positive => self.positive += 1,
            LabelKind::Negative => self.negative += 1,
            LabelKind::Unlabeled => self.unlabeled += 1,
        }
    }
}

/// Record counts per (gear, region, label) cell, plus totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct GroupCountTable {
    cells: std::collections::BTreeMap<Gear, std::collections::BTreeMap<Region, LabelCounts>>,
    pub totals: LabelCounts,
}

impl GroupCountTable {
    pub fn cell(&self, gear: Gear, region: Region) -> LabelCounts {
        self.cells
            .get(&gear)
            .and_then(|m| m.get(&region))
            .copied()
            .unwrap_or_default()
    }

    pub fn cells(&self) -> impl Iterator<Item = ((Gear, Region), &LabelCounts)> {
        self.cells
            .iter()
            .flat_map(|(g, m)| m.iter().map(move |(r, c)| ((*g, *r), c)))
    }
}

/// Count records per (gear, region, label) cell. Totals equal dataset size.
pub fn summarize(dataset: &Dataset) -> GroupCountTable {
    let mut table = GroupCountTable::default();
    for rec in dataset.records() {
        table
            .cells
            .entry(rec.gear)
            .or_default()
            .entry(rec.region)
            .or_default()
            .bump(rec.label);
        table.totals.bump(rec.label);
    }
    table
}

/// One column of the numeric design matrix: either a retained numeric
/// feature passed through, or a one-hot indicator of a non-reference level
/// of a categorical feature.
#[derive(Debug, Clone)]
pub struct DesignColumn {
    /// Catalog index of the source feature.
    pub feature_index: usize,
    /// Column name, e.g. `engine_power_kw` or `fishing_gear_type=trawler`.
    pub name: String,
    /// For indicator columns, the level index that maps to 1.0.
    pub level: Option<u8>,
}

/// Deterministic numeric encoding of records: retained numeric features in
/// catalog order, with each categorical expanded to one-hot indicators of
/// its non-reference levels (first allowed level is the reference).
#[derive(Debug, Clone)]
pub struct DesignLayout {
    columns: Vec<DesignColumn>,
}

impl DesignLayout {
    /// Build the layout for the given catalog, keeping only the numeric
    /// features whose catalog indices appear in `kept_numeric`. Categorical
    /// features are always included.
    pub fn new(catalog: &FeatureCatalog, kept_numeric: &[usize]) -> Self {
        let mut columns = Vec::new();
        for (fi, spec) in catalog.entries().iter().enumerate() {
            match &spec.kind {
                FeatureKind::Numeric => {
                    if kept_numeric.contains(&fi) {
                        columns.push(DesignColumn {
                            feature_index: fi,
                            name: spec.name.to_string(),
                            level: None,
                        });
                    }
                }
                FeatureKind::Categorical { allowed } => {
                    for (li, level) in allowed.iter().enumerate().skip(1) {
                        columns.push(DesignColumn {
                            feature_index: fi,
                            name: format!("{}={}", spec.name, level),
                            level: Some(li as u8),
                        });
                    }
                }
            }
        }
        DesignLayout { columns }
    }

    /// Layout over all features (no numeric filtering).
    pub fn full(catalog: &FeatureCatalog) -> Self {
        Self::new(catalog, &catalog.numeric_indices())
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[DesignColumn] {
        &self.columns
    }

    /// Encode one record into a dense numeric row.
    pub fn encode(&self, record: &VesselYearRecord) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            match (&record.features[c.feature_index], c.level) {
                (FeatureValue::Numeric(v), None) => row.push(*v),
                (FeatureValue::Categorical(ix), Some(level)) => {
                    row.push(if *ix == level { 1.0 } else { 0.0 })
                }
                _ => row.push(f64::NAN), // guarded by Dataset validation
            }
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn header() -> String {
        let catalog = FeatureCatalog::standard();
        let mut cols: Vec<&str> = META_COLUMNS.to_vec();
        cols.extend(catalog.entries().iter().map(|e| e.name));
        cols.join(",")
    }

    /// A data row with every numeric feature equal to `fill`.
    fn row(case_id: &str, label: &str, source: &str, fill: f64) -> String {
        let catalog = FeatureCatalog::standard();
        let mut fields = vec![
            case_id.to_string(),
            "2019".to_string(),
            label.to_string(),
            source.to_string(),
            "trawler".to_string(),
            "asia".to_string(),
        ];
        for spec in catalog.entries() {
            match &spec.kind {
                FeatureKind::Numeric => fields.push(fill.to_string()),
                FeatureKind::Categorical { allowed } => fields.push(allowed[0].to_string()),
            }
        }
        fields.join(",")
    }

    #[test]
    fn standard_catalog_shape() {
        let catalog = FeatureCatalog::standard();
        assert_eq!(catalog.len(), N_FEATURES);
        let n_cat = catalog.entries().iter().filter(|e| !e.is_numeric()).count();
        assert_eq!(n_cat, 3);
        assert_eq!(catalog.numeric_indices().len(), 26);
        let mut names: Vec<_> = catalog.entries().iter().map(|e| e.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), N_FEATURES, "feature names must be unique");
        assert_eq!(catalog.entries()[0].name, "ais_device_type");
        assert_eq!(catalog.entries()[N_FEATURES - 1].name, "vessel_length_m");
    }

    #[test]
    fn load_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{}\n{}\n{}\n{}\n{}\n",
            header(),
            row("c1", "positive", "s1", 1.5),
            row("c2", "unlabeled", "s2", 2.5),
            row("c3", "negative", "s3", -0.25),
            row("c4", "unlabeled", "s2", 0.0),
        );
        let path = write_csv(&dir, "ok.csv", &body);
        let ds = load_dataset(&path, FeatureCatalog::standard()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.records()[0].label, LabelKind::Positive);
        assert_eq!(ds.records()[2].label, LabelKind::Negative);
        assert_eq!(ds.get("c2").unwrap().source_id, "s2");
    }

    #[test]
    fn empty_numeric_cell_is_nonfinite_error() {
        let dir = tempfile::tempdir().unwrap();
        // blank out the avg_gap_distance_km cell of row 2
        let good = row("c2", "unlabeled", "s2", 2.5);
        let broken = {
            let mut fields: Vec<&str> = good.split(',').collect();
            let idx = 6 + FeatureCatalog::standard()
                .index_of("avg_gap_distance_km")
                .unwrap();
            fields[idx] = "";
            fields.join(",")
        };
        let body = format!("{}\n{}\n{}\n", header(), row("c1", "positive", "s1", 1.0), broken);
        let path = write_csv(&dir, "bad.csv", &body);
        match load_dataset(&path, FeatureCatalog::standard()) {
            Err(DataError::NonFiniteValue { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "avg_gap_distance_km");
            }
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_and_bad_categorical_and_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\n{}\n", header(), row("c1", "maybe", "s1", 1.0));
        let path = write_csv(&dir, "lbl.csv", &body);
        assert!(matches!(
            load_dataset(&path, FeatureCatalog::standard()),
            Err(DataError::UnknownLabel { row: 1, .. })
        ));

        let bad_cat = row("c1", "positive", "s1", 1.0).replace("trawler", "dredger");
        let body = format!("{}\n{}\n", header(), bad_cat);
        let path = write_csv(&dir, "cat.csv", &body);
        assert!(matches!(
            load_dataset(&path, FeatureCatalog::standard()),
            Err(DataError::InvalidCategoricalValue { .. })
        ));

        let body = format!(
            "{}\n{}\n{}\n",
            header(),
            row("c1", "positive", "s1", 1.0),
            row("c1", "unlabeled", "s2", 2.0)
        );
        let path = write_csv(&dir, "dup.csv", &body);
        assert!(matches!(
            load_dataset(&path, FeatureCatalog::standard()),
            Err(DataError::DuplicateCaseId { row: 2, .. })
        ));
    }

    #[test]
    fn missing_column_detected() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = header().replace("vessel_length_m", "vessel_len");
        let path = write_csv(&dir, "mc.csv", &format!("{hdr}\n"));
        match load_dataset(&path, FeatureCatalog::standard()) {
            Err(DataError::MissingColumn { column }) => assert_eq!(column, "vessel_length_m"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn summarize_empty_dataset_all_zero() {
        let ds = Dataset::new(FeatureCatalog::standard(), vec![]).unwrap();
        let table = summarize(&ds);
        assert_eq!(table.totals.total(), 0);
        for gear in Gear::ALL {
            for region in Region::ALL {
                assert_eq!(table.cell(gear, region).total(), 0);
            }
        }
    }

    #[test]
    fn summarize_matches_published_group_counts() {
        // Grid of per-(gear, region, label) counts reported for the real
        // vessel-year data; exercises counting at realistic scale.
        let grid: &[(Gear, Region, usize, usize, usize)] = &[
            (Gear::DriftingLongline, Region::Asia, 30, 0, 12850),
            (Gear::DriftingLongline, Region::Other, 10, 0, 8037),
            (Gear::SquidJigger, Region::Asia, 14, 0, 5221),
            (Gear::SquidJigger, Region::Other, 0, 0, 801),
            (Gear::PurseSeiner, Region::Asia, 6, 0, 1078),
            (Gear::PurseSeiner, Region::Other, 1, 0, 4232),
            (Gear::Trawler, Region::Asia, 9, 0, 6150),
            (Gear::Trawler, Region::Other, 2, 53, 68887),
        ];
        let catalog = FeatureCatalog::standard();
        let mut records = Vec::new();
        let mut n = 0usize;
        let mut push = |gear: Gear, region: Region, label: LabelKind, count: usize| {
            for _ in 0..count {
                let features = catalog
                    .entries()
                    .iter()
                    .map(|spec| match &spec.kind {
                        FeatureKind::Numeric => FeatureValue::Numeric(0.0),
                        FeatureKind::Categorical { .. } => FeatureValue::Categorical(0),
                    })
                    .collect();
                records.push(VesselYearRecord {
                    case_id: format!("c{n}"),
                    year: 2019,
                    label,
                    source_id: format!("s{}", n % 97),
                    gear,
                    region,
                    features,
                });
                n += 1;
            }
        };
        for &(gear, region, pos, neg, unl) in grid {
            push(gear, region, LabelKind::Positive, pos);
            push(gear, region, LabelKind::Negative, neg);
            push(gear, region, LabelKind::Unlabeled, unl);
        }
        let ds = Dataset::new(catalog, records).unwrap();
        let table = summarize(&ds);
        let asia_ll = table.cell(Gear::DriftingLongline, Region::Asia);
        assert_eq!(asia_ll.positive, 30);
        assert_eq!(asia_ll.unlabeled, 12850);
        assert_eq!(table.totals.positive, 72);
        assert_eq!(table.totals.negative, 53);
        assert_eq!(table.totals.unlabeled, 107256);
        assert_eq!(table.totals.total(), ds.len());
        // per-label marginals match direct counts
        let direct_pos = ds
            .records()
            .iter()
            .filter(|r| r.label == LabelKind::Positive)
            .count();
        assert_eq!(table.totals.positive, direct_pos);
        let cell_sum: usize = table.cells().map(|(_, c)| c.total()).sum();
        assert_eq!(cell_sum, ds.len());
    }

    #[test]
    fn design_layout_one_hot_shape() {
        let catalog = FeatureCatalog::standard();
        let layout = DesignLayout::full(catalog);
        // 26 numeric + 1 (ais) + 3 (gear) + 1 (foc)
        assert_eq!(layout.width(), 31);
        let names: Vec<_> = layout.columns().iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"fishing_gear_type=squid_jigger"));
        assert!(names.contains(&"fishing_gear_type=trawler"));
        assert!(names.contains(&"fishing_gear_type=purse_seiner"));
        assert!(!names.iter().any(|n| n.contains("drifting_longline")));
        assert!(names.contains(&"ais_device_type=B"));
        assert!(names.contains(&"flag_of_convenience=yes"));
    }
}
