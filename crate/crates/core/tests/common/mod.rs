//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use nls_core::feature::{FeatureSet, ProbabilityStack, DEFAULT_CLAMP_FLOOR};
use nls_core::field::{GridShape, LabelMap, ScalarField};
use nls_core::loss::EdgeLabelMap;
use nls_core::sdf::BinaryMask;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shape(h: usize, w: usize) -> GridShape {
    GridShape::new(h, w).unwrap()
}

/// Disk of `radius` centred on the grid.
pub fn disk(n: usize, radius: f64) -> BinaryMask {
    let c = (n as f64 - 1.0) / 2.0;
    BinaryMask::from_fn(shape(n, n), |r, cc| {
        ((r as f64 - c).powi(2) + (cc as f64 - c).powi(2)).sqrt() <= radius
    })
}

/// Exact Euclidean distance from each pixel centre to the nearest pixel
/// centre of the other class, less the half-pixel to the boundary between
/// them; negative inside.
pub fn brute_force_sdf(mask: &BinaryMask) -> Vec<f64> {
    let s = mask.shape();
    let w = s.width();
    let inside = mask.inside();
    (0..s.len())
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            let mut best = f64::INFINITY;
            for (j, &other) in inside.iter().enumerate() {
                if other != inside[i] {
                    let (r2, c2) = ((j / w) as f64, (j % w) as f64);
                    best = best.min(((r - r2).powi(2) + (c - c2).powi(2)).sqrt());
                }
            }
            let d = best - 0.5;
            if inside[i] {
                -d
            } else {
                d
            }
        })
        .collect()
}

/// Random simplex stack: `n` region channels and an edge channel.
pub fn random_stack(rng: &mut ChaCha8Rng, s: GridShape, n: usize) -> ProbabilityStack {
    let mut raw: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..s.len()).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    // occasional exact zeros exercise the clamp
    for ch in raw.iter_mut() {
        for v in ch.iter_mut() {
            if rng.random_range(0.0..1.0) < 0.03 {
                *v = 0.0;
            }
        }
    }
    for i in 0..s.len() {
        let sum: f64 = raw.iter().map(|ch| ch[i]).sum();
        for ch in raw.iter_mut() {
            ch[i] = if sum > 0.0 {
                ch[i] / sum
            } else {
                1.0 / n as f64
            };
        }
    }
    let edge: Vec<f64> = (0..s.len())
        .map(|_| match rng.random_range(0..20) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        })
        .collect();
    ProbabilityStack::new(
        raw.into_iter()
            .map(|v| ScalarField::new(s, v).unwrap())
            .collect(),
        ScalarField::new(s, edge).unwrap(),
    )
    .unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, s: GridShape, n: u32) -> LabelMap {
    LabelMap::new(
        s,
        (0..s.len()).map(|_| rng.random_range(1..=n)).collect(),
        n,
    )
    .unwrap()
}

/// Exactly `round(fraction * |Y|)` edge pixels at random positions.
pub fn random_edges(rng: &mut ChaCha8Rng, s: GridShape, fraction: f64) -> EdgeLabelMap {
    let k = (fraction * s.len() as f64).round() as usize;
    let mut labels = vec![0u8; s.len()];
    labels[..k].iter_mut().for_each(|l| *l = 1);
    labels.shuffle(rng);
    EdgeLabelMap::new(s, labels).unwrap()
}

fn neg_log(p: f64) -> f64 {
    -(if p < DEFAULT_CLAMP_FLOOR {
        DEFAULT_CLAMP_FLOOR
    } else {
        p
    })
    .ln()
}

/// Pixel loop for `-sum log P(true channel)`.
pub fn region_loss_oracle(p: &ProbabilityStack, truth: &LabelMap) -> f64 {
    let mut total = 0.0;
    for (j, &l) in truth.labels().iter().enumerate() {
        total += neg_log(p.regions()[l as usize - 1].values()[j]);
    }
    total
}

/// Pixel loop for the class-balanced edge loss; `beta` counted directly.
pub fn edge_loss_oracle(prob: &ScalarField, truth: &EdgeLabelMap) -> f64 {
    let total = truth.labels().len() as f64;
    let non_edge = truth.labels().iter().filter(|&&e| e == 0).count() as f64;
    let beta = non_edge / total;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (j, &e) in truth.labels().iter().enumerate() {
        let q = prob.values()[j];
        if e == 1 {
            pos += neg_log(q);
        } else {
            neg += neg_log(1.0 - q);
        }
    }
    beta * pos + (1.0 - beta) * neg
}

/// Features with every pixel but `keep` zeroed. With no boundary term the
/// energy is a per-pixel sum, so its derivative with respect to `phi[keep]`
/// is unchanged while the other terms no longer swamp the difference.
pub fn isolate_pixel(features: &FeatureSet, keep: usize) -> FeatureSet {
    let s = features.shape();
    let regions = features
        .regions()
        .iter()
        .map(|f| {
            let mut v = vec![0.0; s.len()];
            v[keep] = f.values()[keep];
            ScalarField::new(s, v).unwrap()
        })
        .collect();
    FeatureSet::new(regions, features.edge().clone(), features.clamp_floor()).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
