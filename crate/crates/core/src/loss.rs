//! Cross-entropy objectives for region and edge probability maps.
//!
//! Both losses are total sums over pixels, not means. The edge loss is
//! class-balanced: with `Y+` the edge pixels and `Y-` the rest,
//! `beta = |Y-| / |Y|` multiplies the edge-pixel term so the rare edge class
//! is up-weighted.

use crate::error::{contract, Result};
use crate::feature::{clamped_neg_log, ProbabilityStack, DEFAULT_CLAMP_FLOOR};
use crate::field::{GridShape, LabelMap, ScalarField};

/// Binary edge map, 1 on edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabelMap {
    shape: GridShape,
    labels: Vec<u8>,
}

impl EdgeLabelMap {
    pub fn new(shape: GridShape, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != shape.len() {
            return contract(format!(
                "edge map of shape {shape} needs {} labels, got {}",
                shape.len(),
                labels.len()
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return contract("edge labels must be 0 or 1");
        }
        Ok(Self { shape, labels })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn edge_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// `|Y-| / |Y|`.
    pub fn balance_weight(&self) -> f64 {
        (self.labels.len() - self.edge_count()) as f64 / self.labels.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    alpha: f64,
    clamp_floor: f64,
}

impl LossParams {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_floor(alpha, DEFAULT_CLAMP_FLOOR)
    }

    pub fn with_floor(alpha: f64, clamp_floor: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return contract(format!("alpha must be finite and >= 0, got {alpha}"));
        }
        if !(clamp_floor > 0.0 && clamp_floor < 1.0) {
            return contract(format!("clamp floor must lie in (0, 1), got {clamp_floor}"));
        }
        Ok(Self { alpha, clamp_floor })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn clamp_floor(&self) -> f64 {
        self.clamp_floor
    }
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        }
    }
}

/// `-sum_j log P(true label at j)`.
pub fn region_loss(p: &ProbabilityStack, truth: &LabelMap, clamp_floor: f64) -> Result<f64> {
    p.shape().ensure_same(&truth.shape())?;
    if truth.regions() as usize != p.region_count() {
        return contract(format!(
            "label map has {} regions, stack has {} channels",
            truth.regions(),
            p.region_count()
        ));
    }
    let channels = p.regions();
    Ok(truth
        .labels()
        .iter()
        .enumerate()
        .map(|(j, &l)| clamped_neg_log(channels[l as usize - 1].values()[j], clamp_floor))
        .sum())
}

/// Class-balanced edge cross-entropy with `beta = |Y-| / |Y|`.
///
/// When every pixel is an edge, `beta = 0` and the loss is 0.
pub fn edge_loss(edge_prob: &ScalarField, truth: &EdgeLabelMap, clamp_floor: f64) -> Result<f64> {
    edge_loss_weighted(edge_prob, truth, truth.balance_weight(), clamp_floor)
}

/// Edge cross-entropy with an explicit weight `beta` on the edge term and
/// `1 - beta` on the non-edge term.
pub fn edge_loss_weighted(
    edge_prob: &ScalarField,
    truth: &EdgeLabelMap,
    beta: f64,
    clamp_floor: f64,
) -> Result<f64> {
    edge_prob.shape().ensure_same(&truth.shape())?;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (&p, &e) in edge_prob.values().iter().zip(truth.labels()) {
        if e == 1 {
            pos += clamped_neg_log(p, clamp_floor);
        } else {
            neg += clamped_neg_log(1.0 - p, clamp_floor);
        }
    }
    Ok(beta * pos + (1.0 - beta) * neg)
}

/// `L_R + alpha L_E`.
pub fn combined_loss(
    p: &ProbabilityStack,
    region_truth: &LabelMap,
    edge_truth: &EdgeLabelMap,
    params: &LossParams,
) -> Result<f64> {
    let lr = region_loss(p, region_truth, params.clamp_floor)?;
    let le = edge_loss(p.edge(), edge_truth, params.clamp_floor)?;
    Ok(lr + params.alpha * le)
}

/// A pixel is an edge iff one of its in-bounds 4-neighbours has a different
/// label.
pub fn derive_edge_labels(region_truth: &LabelMap) -> EdgeLabelMap {
    let shape = region_truth.shape();
    let (h, w) = (shape.height(), shape.width());
    let l = region_truth.labels();
    let mut out = vec![0u8; l.len()];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let differs = (c > 0 && l[i - 1] != l[i])
                || (c + 1 < w && l[i + 1] != l[i])
                || (r > 0 && l[i - w] != l[i])
                || (r + 1 < h && l[i + w] != l[i]);
            out[i] = u8::from(differs);
        }
    }
    EdgeLabelMap { shape, labels: out }
}
