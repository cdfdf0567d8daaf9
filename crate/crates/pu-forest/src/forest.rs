//! Probability-scoring random forest trained on positive vs. unlabeled rows.
//!
//! Trees are CART-style: Gini impurity, numeric splits at midpoints between
//! sorted distinct values, `mtry` candidate columns drawn without
//! replacement per node. Leaves store the positive-class proportion and the
//! forest score is the plain mean of leaf proportions over trees, which
//! keeps scores continuous for the downstream density-ratio estimator.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cv::{derive_seed, BagSpec};
use crate::data::{Dataset, DesignLayout, FeatureCatalog, VesselYearRecord};
use crate::exec::{self, ExecMode};
use crate::featsel::SelectionMask;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training bag contains a single class")]
    DegenerateBag,
    #[error("record does not conform to the forest's catalog: {0}")]
    CatalogMismatch(String),
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown case id in bag: {0}")]
    UnknownCase(String),
    #[error("model file error: {0}")]
    ModelFile(String),
}

/// Forest hyperparameters. Defaults follow the common random-forest
/// conventions (500 trees, sqrt mtry, fully grown trees, bootstrap with
/// replacement); all are configurable from the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate columns per node; `None` means `floor(sqrt(p))` over the
    /// design-matrix width p after feature selection.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    /// `None` means unlimited depth.
    pub max_depth: Option<usize>,
    /// Bootstrap sample size as a fraction of the bag, drawn with
    /// replacement.
    pub bootstrap_fraction: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            bootstrap_fraction: 1.0,
        }
    }
}

impl ForestConfig {
    fn validate(&self, width: usize) -> Result<usize, ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be >= 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::InvalidConfig(
                "min_node_size must be >= 1".into(),
            ));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(ForestError::InvalidConfig(
                "bootstrap_fraction must be in (0, 1]".into(),
            ));
        }
        let mtry = self
            .mtry
            .unwrap_or_else(|| (width as f64).sqrt().floor() as usize)
            .max(1);
        if mtry > width {
            return Err(ForestError::InvalidConfig(format!(
                "mtry {mtry} exceeds design-matrix width {width}"
            )));
        }
        Ok(mtry)
    }
}

/// One tree node in the flat array representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        /// Design-matrix column index.
        feature: u32,
        /// Rows with value <= threshold go left.
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Positive-class proportion of the training rows in this leaf.
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Walk one encoded row to its leaf proportion.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
}

/// A trained forest plus the feature-selection mask and provenance needed to
/// score new records deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedForest {
    trees: Vec<Tree>,
    mask: SelectionMask,
    config: ForestConfig,
    seed: u64,
    layout: DesignLayout,
    catalog_len: usize,
}

/// Versioned on-disk form of a forest.
#[derive(Serialize, Deserialize)]
struct ForestFile {
    version: u32,
    seed: u64,
    config: ForestConfig,
    kept: Vec<String>,
    dropped_zero_variance: Vec<String>,
    dropped_correlated: Vec<(String, String, f64)>,
    trees: Vec<Tree>,
}

const FOREST_FILE_VERSION: u32 = 1;

impl TrainedForest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn mask(&self) -> &SelectionMask {
        &self.mask
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    /// Encode a record into this forest's design row.
    pub fn encode(&self, record: &VesselYearRecord) -> Result<Vec<f64>, ForestError> {
        if record.features.len() != self.catalog_len {
            return Err(ForestError::CatalogMismatch(format!(
                "record has {} features, forest expects {}",
                record.features.len(),
                self.catalog_len
            )));
        }
        Ok(self.layout.encode(record))
    }

    /// Serialize to a versioned JSON model file.
    pub fn save(&self, path: &std::path::Path) -> Result<(), ForestError> {
        let file = ForestFile {
            version: FOREST_FILE_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            kept: self.mask.kept.clone(),
            dropped_zero_variance: self.mask.dropped_zero_variance.clone(),
            dropped_correlated: self.mask.dropped_correlated.clone(),
            trees: self.trees.clone(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| ForestError::ModelFile(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ForestError::ModelFile(e.to_string()))
    }

    /// Load a forest saved with [`TrainedForest::save`].
    pub fn load(
        path: &std::path::Path,
        catalog: &'static FeatureCatalog,
    ) -> Result<Self, ForestError> {
        let json =
            std::fs::read_to_string(path).map_err(|e| ForestError::ModelFile(e.to_string()))?;
        let file: ForestFile =
            serde_json::from_str(&json).map_err(|e| ForestError::ModelFile(e.to_string()))?;
        if file.version != FOREST_FILE_VERSION {
            return Err(ForestError::ModelFile(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        let mask = SelectionMask {
            kept: file.kept,
            dropped_zero_variance: file.dropped_zero_variance,
            dropped_correlated: file.dropped_correlated,
        };
        let layout = DesignLayout::new(catalog, &mask.kept_numeric_indices(catalog));
        Ok(TrainedForest {
            trees: file.trees,
            mask,
            config: file.config,
            seed: file.seed,
            layout,
            catalog_len: catalog.len(),
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        trees: Vec<Tree>,
        mask: SelectionMask,
        config: ForestConfig,
        catalog: &FeatureCatalog,
    ) -> Self {
        let layout = DesignLayout::new(catalog, &mask.kept_numeric_indices(catalog));
        TrainedForest {
            trees,
            mask,
            config,
            seed: 0,
            layout,
            catalog_len: catalog.len(),
        }
    }
}

/// Column-major training matrix for one bag.
struct BagMatrix {
    columns: Vec<Vec<f64>>,
    labels: Vec<bool>,
    n_rows: usize,
}

fn bag_matrix(
    bag: &BagSpec,
    dataset: &Dataset,
    layout: &DesignLayout,
) -> Result<BagMatrix, ForestError> {
    let mut rows = Vec::with_capacity(bag.positive_ids.len() + bag.unlabeled_ids.len());
    let mut labels = Vec::with_capacity(rows.capacity());
    for (ids, label) in [(&bag.positive_ids, true), (&bag.unlabeled_ids, false)] {
        for id in ids {
            let rec = dataset
                .get(id)
                .ok_or_else(|| ForestError::UnknownCase(id.clone()))?;
            rows.push(layout.encode(rec));
            labels.push(label);
        }
    }
    let n_rows = rows.len();
    let width = layout.width();
    let mut columns = vec![Vec::with_capacity(n_rows); width];
    for row in &rows {
        for (c, v) in row.iter().enumerate() {
            columns[c].push(*v);
        }
    }
    Ok(BagMatrix {
        columns,
        labels,
        n_rows,
    })
}

struct TreeBuilder<'a> {
    matrix: &'a BagMatrix,
    mtry: usize,
    min_node_size: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let n = rows.len();
        let n_pos = rows
            .iter()
            .filter(|&&r| self.matrix.labels[r as usize])
            .count();
        let proportion = n_pos as f64 / n as f64;
        let done = n_pos == 0
            || n_pos == n
            || n < 2 * self.min_node_size
            || self.max_depth.is_some_and(|d| depth >= d);
        if !done {
            if let Some((feature, threshold)) = self.best_split(&rows, n_pos) {
                let (mut left, mut right) = (Vec::new(), Vec::new());
                let col = &self.matrix.columns[feature as usize];
                for &r in &rows {
                    if col[r as usize] <= threshold {
                        left.push(r);
                    } else {
                        right.push(r);
                    }
                }
                let index = self.nodes.len() as u32;
                self.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
                let left_ix = self.grow(left, depth + 1);
                let right_ix = self.grow(right, depth + 1);
                self.nodes[index as usize] = Node::Split {
                    feature,
                    threshold,
                    left: left_ix,
                    right: right_ix,
                };
                return index;
            }
        }
        let index = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: proportion });
        index
    }

    /// Best (feature, midpoint threshold) by weighted Gini impurity among
    /// `mtry` candidate columns; `None` when every candidate is constant in
    /// this node. Ties keep the earliest candidate and threshold.
    fn best_split(&mut self, rows: &[u32], n_pos: usize) -> Option<(u32, f64)> {
        let n = rows.len();
        let width = self.matrix.columns.len();
        let candidates = rand::seq::index::sample(&mut self.rng, width, self.mtry);
        let mut best: Option<(f64, u32, f64)> = None;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
        for feature in candidates.iter() {
            let col = &self.matrix.columns[feature];
            sorted.clear();
            sorted.extend(
                rows.iter()
                    .map(|&r| (col[r as usize], self.matrix.labels[r as usize])),
            );
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_n = 0usize;
            let mut left_pos = 0usize;
            for i in 0..n - 1 {
                left_n += 1;
                if sorted[i].1 {
                    left_pos += 1;
                }
                if sorted[i].0 == sorted[i + 1].0 {
                    continue; // not a boundary between distinct values
                }
                let right_n = n - left_n;
                if left_n < self.min_node_size || right_n < self.min_node_size {
                    continue;
                }
                let right_pos = n_pos - left_pos;
                let gini = |pos: usize, total: usize| -> f64 {
                    let p = pos as f64 / total as f64;
                    2.0 * p * (1.0 - p)
                };
                let weighted = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(right_pos, right_n))
                    / n as f64;
                if best.map_or(true, |(b, _, _)| weighted < b) {
                    let threshold = 0.5 * (sorted[i].0 + sorted[i + 1].0);
                    best = Some((weighted, feature as u32, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Train one forest on a bag. Deterministic for fixed inputs and seed: each
/// tree's bootstrap and candidate draws come from a ChaCha stream seeded by
/// `derive_seed(seed, [tree_index])`, so results do not depend on thread
/// count.
pub fn train_forest(
    bag: &BagSpec,
    dataset: &Dataset,
    mask: &SelectionMask,
    config: &ForestConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<TrainedForest, ForestError> {
    let catalog = dataset.catalog();
    let layout = DesignLayout::new(catalog, &mask.kept_numeric_indices(catalog));
    let matrix = bag_matrix(bag, dataset, &layout)?;
    if matrix.labels.iter().all(|&l| l) || matrix.labels.iter().all(|&l| !l) {
        return Err(ForestError::DegenerateBag);
    }
    let mtry = config.validate(layout.width())?;

    let n = matrix.n_rows;
    let n_boot = ((config.bootstrap_fraction * n as f64).round() as usize).max(1);
    let trees = exec::map_range(mode, config.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
        let rows: Vec<u32> = (0..n_boot).map(|_| rng.gen_range(0..n) as u32).collect();
        let mut builder = TreeBuilder {
            matrix: &matrix,
            mtry,
            min_node_size: config.min_node_size,
            max_depth: config.max_depth,
            nodes: Vec::new(),
            rng,
        };
        builder.grow(rows, 0);
        Tree {
            nodes: builder.nodes,
        }
    });

    Ok(TrainedForest {
        trees,
        mask: mask.clone(),
        config: config.clone(),
        seed,
        layout,
        catalog_len: catalog.len(),
    })
}

/// Mean over trees of leaf positive-class proportions, in [0, 1].
pub fn predict_score(forest: &TrainedForest, record: &VesselYearRecord) -> Result<f64, ForestError> {
    let row = forest.encode(record)?;
    Ok(score_row(forest, &row))
}

/// Score an already-encoded design row.
pub fn score_row(forest: &TrainedForest, row: &[f64]) -> f64 {
    let sum: f64 = forest.trees.iter().map(|t| t.predict(row)).sum();
    sum / forest.trees.len() as f64
}
