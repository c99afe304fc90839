//! Edge-recovery scoring: confusion counts, (truncated) ROC AUC and MCC.
//!
//! All scores read the upper triangle `(j, k)`, `j < k`, of the estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ParsecError, Result};
use crate::parsec::ScaledPCorMatrix;
use crate::pcs_hub::HubPCorMatrix;

/// Anything that assigns a score to each feature pair.
pub trait PairScores {
    fn dim(&self) -> usize;
    fn score(&self, j: usize, k: usize) -> f64;
}

impl PairScores for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn score(&self, j: usize, k: usize) -> f64 {
        self[(j, k)]
    }
}

impl PairScores for ScaledPCorMatrix {
    fn dim(&self) -> usize {
        self.p()
    }
    fn score(&self, j: usize, k: usize) -> f64 {
        self.get(j, k)
    }
}

impl PairScores for HubPCorMatrix {
    fn dim(&self) -> usize {
        self.p()
    }
    fn score(&self, j: usize, k: usize) -> f64 {
        self.get(j, k)
    }
}

/// Symmetric, irreflexive ground-truth graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthGraph {
    p: usize,
    adjacency: Vec<bool>,
    edges: usize,
}

impl TruthGraph {
    pub fn new(p: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![false; p * p];
        let mut edges = 0;
        for &(a, b) in pairs {
            if a == b || a >= p || b >= p {
                return Err(ParsecError::InvalidArgument(format!(
                    "invalid true edge ({a}, {b}) for p = {p}"
                )));
            }
            let (j, k) = (a.min(b), a.max(b));
            if !adjacency[j * p + k] {
                edges += 1;
            }
            adjacency[j * p + k] = true;
            adjacency[k * p + j] = true;
        }
        Ok(Self { p, adjacency, edges })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_edge(&self, j: usize, k: usize) -> bool {
        self.adjacency[j * self.p + k]
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn pair_count(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fp
    }

    /// True-positive rate; 0 when there are no true edges.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// False-discovery proportion; 0 when nothing is declared.
    pub fn fdp(&self) -> f64 {
        ratio(self.fp, self.tp + self.fp)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_dims(estimate: &impl PairScores, truth: &TruthGraph) -> Result<()> {
    if estimate.dim() != truth.p() {
        return Err(ParsecError::Dimension(format!(
            "estimate has p = {}, truth has p = {}",
            estimate.dim(),
            truth.p()
        )));
    }
    Ok(())
}

/// Declares `(j, k)` when `|estimate_jk| >= level`.
pub fn score_edges(estimate: &impl PairScores, truth: &TruthGraph, level: f64) -> Result<ConfusionCounts> {
    check_dims(estimate, truth)?;
    let mut c = ConfusionCounts::default();
    let p = truth.p();
    for j in 0..p {
        for k in (j + 1)..p {
            let declared = estimate.score(j, k).abs() >= level;
            match (declared, truth.is_edge(j, k)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

/// Counts a declared edge list against the truth.
pub fn score_pairs(declared: impl IntoIterator<Item = (usize, usize)>, truth: &TruthGraph) -> ConfusionCounts {
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (j, k) in declared {
        if truth.is_edge(j, k) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let fn_ = truth.edge_count() as u64 - tp;
    let tn = truth.pair_count() as u64 - tp - fp - fn_;
    ConfusionCounts { tp, fp, tn, fn_ }
}

/// ROC area for ranking pairs by `|estimate|`. With `fpr_cap < 1` the area
/// over `FPR in [0, cap]` is divided by `cap`. Ties in the score are swept
/// as one step, which credits tied edge/non-edge pairs with 1/2.
pub fn auc(estimate: &impl PairScores, truth: &TruthGraph, fpr_cap: f64) -> Result<f64> {
    check_dims(estimate, truth)?;
    if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
        return Err(ParsecError::InvalidArgument(format!("fpr_cap = {fpr_cap} must lie in (0, 1]")));
    }
    let p = truth.p();
    let positives = truth.edge_count();
    let negatives = truth.pair_count() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ParsecError::InvalidArgument(
            "AUC undefined: truth needs at least one edge and one non-edge".into(),
        ));
    }
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(truth.pair_count());
    for j in 0..p {
        for k in (j + 1)..p {
            scored.push((estimate.score(j, k).abs(), truth.is_edge(j, k)));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (np, nn) = (positives as f64, negatives as f64);
    let mut area = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, x1) = (fp0 as f64 / nn, fp as f64 / nn);
        let (y0, y1) = (tp0 as f64 / np, tp as f64 / np);
        if x0 >= fpr_cap {
            break;
        }
        if x1 <= fpr_cap {
            area += 0.5 * (x1 - x0) * (y0 + y1);
        } else {
            // Clip the segment at the cap.
            let y_cap = y0 + (y1 - y0) * (fpr_cap - x0) / (x1 - x0);
            area += 0.5 * (fpr_cap - x0) * (y0 + y_cap);
            break;
        }
    }
    Ok(area / fpr_cap)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}
