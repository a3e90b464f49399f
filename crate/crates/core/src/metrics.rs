//! Evaluation metrics for change-point detection: segmentation covering
//! (length-weighted best Jaccard overlap, averaged over annotators) and
//! margin-matched F1/precision/recall against multi-annotator ground truth,
//! plus mean-rank aggregation across datasets.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `[0, n)` induced by sorted interior boundaries.
///
/// Boundaries are deduplicated and anything outside `(0, n)` is dropped, so a
/// change-point at the first index of a new segment maps directly onto a
/// boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    n: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(n: usize, indices: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("empty series has no segmentation"));
        }
        let boundaries: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| i > 0 && i < n)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Segmentation { n, boundaries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Half-open `[start, end)` segments covering `[0, n)`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.boundaries.len() + 1);
        let mut start = 0;
        for &b in &self.boundaries {
            out.push((start, b));
            start = b;
        }
        out.push((start, self.n));
        out
    }
}

fn jaccard(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter as f64 / union as f64
}

/// Ground-truth change-point lists, one per annotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    annotators: Vec<Vec<usize>>,
}

impl AnnotationSet {
    pub fn new(annotators: Vec<Vec<usize>>) -> Result<Self> {
        if annotators.is_empty() {
            return Err(Error::invalid_input("need at least one annotator"));
        }
        let annotators = annotators
            .into_iter()
            .map(|a| a.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        Ok(AnnotationSet { annotators })
    }

    pub fn single(indices: Vec<usize>) -> Result<Self> {
        AnnotationSet::new(vec![indices])
    }

    pub fn annotators(&self) -> &[Vec<usize>] {
        &self.annotators
    }

    pub fn len(&self) -> usize {
        self.annotators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotators.is_empty()
    }

    /// Union of all annotators' points.
    pub fn union(&self) -> Vec<usize> {
        self.annotators
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// On-disk annotation schema: `{"dataset", "n", "annotations": {"1": [...]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub dataset: String,
    pub n: usize,
    pub annotations: BTreeMap<String, Vec<usize>>,
}

impl AnnotationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn annotation_set(&self) -> Result<AnnotationSet> {
        AnnotationSet::new(self.annotations.values().cloned().collect())
    }
}

/// Settings for precision/recall matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    /// Maximum index distance for a prediction to match a true point.
    pub margin: usize,
    /// Append index 0 to predictions and every annotator before matching
    /// (the benchmark convention).
    pub include_trivial_start: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            margin: 5,
            include_trivial_start: true,
        }
    }
}

/// Covering score in `[0, 1]`: per annotator, the length-weighted best
/// Jaccard overlap of each true segment with the predicted segmentation,
/// normalized by `n` and averaged over annotators.
pub fn covering(predicted: &[usize], truth: &AnnotationSet, n: usize) -> Result<f64> {
    let pred_segments = Segmentation::new(n, predicted)?.segments();
    let mut total = 0.0;
    for annotator in truth.annotators() {
        let mut score = 0.0;
        for seg in Segmentation::new(n, annotator)?.segments() {
            let best = pred_segments
                .iter()
                .map(|&p| jaccard(seg, p))
                .fold(0.0, f64::max);
            score += (seg.1 - seg.0) as f64 * best;
        }
        total += score / n as f64;
    }
    Ok(total / truth.len() as f64)
}

/// Greedy unique matching: closest pairs first, ties broken by the earlier
/// ground-truth index, each point used at most once. Returns the number of
/// matched pairs.
fn greedy_true_positives(truth: &[usize], predicted: &[usize], margin: usize) -> usize {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (gi, &g) in truth.iter().enumerate() {
        for (pi, &p) in predicted.iter().enumerate() {
            let dist = g.abs_diff(p);
            if dist <= margin {
                pairs.push((dist, gi, pi));
            }
        }
    }
    pairs.sort_unstable();
    let mut g_used = vec![false; truth.len()];
    let mut p_used = vec![false; predicted.len()];
    let mut tp = 0;
    for (_, gi, pi) in pairs {
        if !g_used[gi] && !p_used[pi] {
            g_used[gi] = true;
            p_used[pi] = true;
            tp += 1;
        }
    }
    tp
}

fn with_trivial_start(points: &[usize], enabled: bool) -> Vec<usize> {
    let mut set: BTreeSet<usize> = points.iter().copied().collect();
    if enabled {
        set.insert(0);
    }
    set.into_iter().collect()
}

/// F1/precision/recall with margin matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Result {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when precision was undefined (no predictions, trivial start off).
    pub degenerate: bool,
}

/// Precision counts matches against the union of all annotators; recall is
/// the mean per-annotator matched fraction; `F1 = 2PR/(P+R)` (0 when both
/// vanish).
pub fn f1_score(predicted: &[usize], truth: &AnnotationSet, cfg: &MatchConfig) -> Result<F1Result> {
    let pred = with_trivial_start(predicted, cfg.include_trivial_start);
    let union = with_trivial_start(&truth.union(), cfg.include_trivial_start);

    if pred.is_empty() {
        // Only possible with trivial start disabled.
        let recall = recall_over_annotators(&pred, truth, cfg);
        return Ok(F1Result {
            f1: 0.0,
            precision: 0.0,
            recall,
            degenerate: true,
        });
    }

    let precision = greedy_true_positives(&union, &pred, cfg.margin) as f64 / pred.len() as f64;
    let recall = recall_over_annotators(&pred, truth, cfg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Result {
        f1,
        precision,
        recall,
        degenerate: false,
    })
}

/// Recall restricted to an arbitrary subset of ground-truth points (for
/// per-category breakdowns): the fraction of `points` matched by a
/// prediction within the margin, under the same unique matching as
/// [`f1_score`]. The trivial-start convention does not apply here.
pub fn recall_for(points: &[usize], predicted: &[usize], margin: usize) -> Option<f64> {
    let points: Vec<usize> = points.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if points.is_empty() {
        return None;
    }
    let pred: Vec<usize> = predicted.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    Some(greedy_true_positives(&points, &pred, margin) as f64 / points.len() as f64)
}

fn recall_over_annotators(pred: &[usize], truth: &AnnotationSet, cfg: &MatchConfig) -> f64 {
    let mut total = 0.0;
    for annotator in truth.annotators() {
        let gt = with_trivial_start(annotator, cfg.include_trivial_start);
        if gt.is_empty() {
            // Vacuous annotator: nothing to find.
            total += 1.0;
            continue;
        }
        total += greedy_true_positives(&gt, pred, cfg.margin) as f64 / gt.len() as f64;
    }
    total / truth.len() as f64
}

/// A complete method × dataset score table (higher is better).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `scores[method][dataset]`.
    pub scores: Vec<Vec<Option<f64>>>,
}

impl ScoreTable {
    pub fn new(methods: Vec<String>, datasets: Vec<String>) -> Self {
        let scores = vec![vec![None; datasets.len()]; methods.len()];
        ScoreTable {
            methods,
            datasets,
            scores,
        }
    }

    pub fn set(&mut self, method: usize, dataset: usize, score: f64) {
        self.scores[method][dataset] = Some(score);
    }
}

/// Mean rank per method across datasets: rank 1 is best per dataset, ties get
/// the mean of the ranks they span.
pub fn average_rank(table: &ScoreTable) -> Result<Vec<f64>> {
    let m = table.methods.len();
    let d = table.datasets.len();
    if m == 0 || d == 0 {
        return Err(Error::invalid_input("empty score table"));
    }
    let mut totals = vec![0.0; m];
    for ds in 0..d {
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(m);
        for me in 0..m {
            let score = table.scores[me][ds].ok_or_else(|| {
                Error::invalid_input(format!(
                    "missing score for method '{}' on dataset '{}'",
                    table.methods[me], table.datasets[ds]
                ))
            })?;
            if score.is_nan() {
                return Err(Error::invalid_input(format!(
                    "NaN score for method '{}' on dataset '{}'",
                    table.methods[me], table.datasets[ds]
                )));
            }
            column.push((score, me));
        }
        // Higher score = better = lower rank.
        column.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut i = 0;
        while i < m {
            let mut j = i;
            while j + 1 < m && column[j + 1].0 == column[i].0 {
                j += 1;
            }
            // Positions i..=j share the mean of ranks i+1..=j+1.
            let rank = (i + 1 + j + 1) as f64 / 2.0;
            for k in i..=j {
                totals[column[k].1] += rank;
            }
            i = j + 1;
        }
    }
    Ok(totals.into_iter().map(|t| t / d as f64).collect())
}
