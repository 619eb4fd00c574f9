//! Signed distance by fast sweeping, and automatic level set initialization.
//!
//! Pixels that have a 4-neighbour on the other side of the mask are seeded
//! with distance 0.5 (the boundary sits halfway between pixel centres). The
//! remaining pixels solve `|grad u| = 1` with causal upwind updates on the
//! 8-neighbour stencil, swept Gauss-Seidel style in the four diagonal
//! orderings. The result is negative inside the mask.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{contract, Error, Result};
use crate::feature::ProbabilityStack;
use crate::field::{GridShape, ScalarField};

const INTERFACE_DISTANCE: f64 = 0.5;
const SWEEP_TOLERANCE: f64 = 1e-6;
const MAX_PASSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: GridShape,
    inside: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: GridShape, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != shape.len() {
            return contract(format!(
                "mask of shape {shape} needs {} entries, got {}",
                shape.len(),
                inside.len()
            ));
        }
        Ok(Self { shape, inside })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let inside = (0..shape.height())
            .flat_map(|r| (0..shape.width()).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self { shape, inside }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn complement(&self) -> Self {
        Self {
            shape: self.shape,
            inside: self.inside.iter().map(|b| !b).collect(),
        }
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// `None` when both classes are present, otherwise which one is missing.
    fn degeneracy(&self) -> Option<&'static str> {
        match self.count_inside() {
            0 => Some("empty"),
            k if k == self.inside.len() => Some("full"),
            _ => None,
        }
    }

    /// Pixels with a 4-neighbour of the opposite class.
    pub fn interface(&self) -> Vec<bool> {
        let (h, w) = (self.shape.height(), self.shape.width());
        let m = &self.inside;
        let mut out = vec![false; m.len()];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                out[i] = (c > 0 && m[i - 1] != m[i])
                    || (c + 1 < w && m[i + 1] != m[i])
                    || (r > 0 && m[i - w] != m[i])
                    || (r + 1 < h && m[i + w] != m[i]);
            }
        }
        out
    }
}

/// Smallest upwind candidate at a pixel given its eight neighbours.
///
/// Each of the eight triangles spanned by an axis neighbour and an adjacent
/// diagonal neighbour gives a plane-wave solution of `|grad u| = 1`, kept
/// only when the wave arrives from inside that triangle; otherwise the
/// one-sided updates along the edges apply. Pairing two axis neighbours
/// instead (the 5-point stencil) drifts by more than a pixel far from small
/// sources and undershoots where fronts collide.
#[inline]
fn upwind_update(nb: &impl Fn(isize, isize) -> f64) -> f64 {
    let mut best = nb(0, -1).min(nb(0, 1)).min(nb(-1, 0)).min(nb(1, 0)) + 1.0;
    for (dr, dc) in [(-1, -1), (-1, 1), (1, -1), (1, 1)] {
        let d = nb(dr, dc);
        best = best.min(d + SQRT_2);
        for axis in [nb(dr, 0), nb(0, dc)] {
            let gap = axis - d;
            if (0.0..=FRAC_1_SQRT_2).contains(&gap) {
                best = best.min(axis + (1.0 - gap * gap).sqrt());
            }
        }
    }
    best
}

/// Unsigned distance to the seeded interface; returns the number of full
/// four-ordering passes performed.
fn sweep(dist: &mut [f64], fixed: &[bool], shape: GridShape) -> usize {
    let (h, w) = (shape.height(), shape.width());
    let orders: [(bool, bool); 4] = [(false, false), (true, false), (true, true), (false, true)];
    let mut passes = 0;
    while passes < MAX_PASSES {
        passes += 1;
        let mut max_change = 0.0f64;
        for &(rev_r, rev_c) in &orders {
            for ri in 0..h {
                let r = if rev_r { h - 1 - ri } else { ri };
                for ci in 0..w {
                    let c = if rev_c { w - 1 - ci } else { ci };
                    let i = r * w + c;
                    if fixed[i] {
                        continue;
                    }
                    let nb = |dr: isize, dc: isize| {
                        let (rr, cc) = (r as isize + dr, c as isize + dc);
                        if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                            f64::INFINITY
                        } else {
                            dist[rr as usize * w + cc as usize]
                        }
                    };
                    let cand = upwind_update(&nb);
                    if !cand.is_finite() {
                        continue;
                    }
                    if cand < dist[i] {
                        let change = if dist[i].is_finite() {
                            dist[i] - cand
                        } else {
                            f64::INFINITY
                        };
                        max_change = max_change.max(change);
                        dist[i] = cand;
                    }
                }
            }
        }
        if max_change < SWEEP_TOLERANCE {
            break;
        }
    }
    passes
}

/// Signed distance to the mask boundary: negative inside, positive outside.
pub fn fast_sweep_sdf(mask: &BinaryMask) -> Result<ScalarField> {
    if let Some(kind) = mask.degeneracy() {
        return contract(format!(
            "signed distance needs inside and outside pixels; mask is {kind}"
        ));
    }
    let shape = mask.shape;
    let fixed = mask.interface();
    let mut dist: Vec<f64> = fixed
        .iter()
        .map(|&f| if f { INTERFACE_DISTANCE } else { f64::INFINITY })
        .collect();
    sweep(&mut dist, &fixed, shape);
    let signed = dist
        .into_iter()
        .zip(&mask.inside)
        .map(|(d, &inside)| if inside { -d } else { d })
        .collect();
    Ok(ScalarField::from_vec_unchecked(shape, signed))
}

/// Initial level set: the signed distance of `{P_R(init_channel) > threshold}`,
/// negative on the thresholded region so it sits below the first level.
pub fn initialize_phi(
    p: &ProbabilityStack,
    init_channel: usize,
    threshold: f64,
) -> Result<ScalarField> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return contract(format!("threshold must lie in (0, 1), got {threshold}"));
    }
    let channel = p.region(init_channel)?;
    let inside = channel.values().iter().map(|&v| v > threshold).collect();
    let mask = BinaryMask::new(p.shape(), inside)?;
    if let Some(kind) = mask.degeneracy() {
        return Err(Error::Initialization(kind));
    }
    fast_sweep_sdf(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(n: usize, radius: f64) -> BinaryMask {
        let c = (n as f64 - 1.0) / 2.0;
        BinaryMask::from_fn(GridShape::new(n, n).unwrap(), |r, cc| {
            let (dr, dc) = (r as f64 - c, cc as f64 - c);
            (dr * dr + dc * dc).sqrt() <= radius
        })
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let s = GridShape::new(5, 5).unwrap();
        let empty = BinaryMask::new(s, vec![false; 25]).unwrap();
        assert!(fast_sweep_sdf(&empty).is_err());
        assert!(fast_sweep_sdf(&empty.complement()).is_err());
        assert!(BinaryMask::new(s, vec![false; 24]).is_err());
    }

    #[test]
    fn half_plane_is_linear() {
        let s = GridShape::new(20, 30).unwrap();
        let mask = BinaryMask::from_fn(s, |_, c| c < 15);
        let phi = fast_sweep_sdf(&mask).unwrap();
        for r in 2..18 {
            for c in 0..30 {
                let expect = c as f64 - 14.5;
                assert!(
                    (phi.get(r, c) - expect).abs() < 0.05,
                    "({r},{c}) {}",
                    phi.get(r, c)
                );
            }
        }
    }

    #[test]
    fn complement_negates() {
        let m = disk(41, 11.0);
        let a = fast_sweep_sdf(&m).unwrap();
        let b = fast_sweep_sdf(&m.complement()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x + y).abs() < 1e-9);
        }
    }

    #[test]
    fn disk_center_depth() {
        let phi = fast_sweep_sdf(&disk(100, 20.0)).unwrap();
        let center = phi.get(50, 50).min(phi.get(49, 49));
        assert!((center + 19.5).abs() <= 1.0, "center {center}");
        assert!(phi.get(0, 0) > 0.0);
    }

    #[test]
    fn sweeps_converge_quickly() {
        let m = disk(160, 30.0);
        let fixed = m.interface();
        let mut d: Vec<f64> = fixed
            .iter()
            .map(|&f| if f { 0.5 } else { f64::INFINITY })
            .collect();
        let passes = sweep(&mut d, &fixed, m.shape());
        assert!(passes < MAX_PASSES, "took {passes} passes");
        assert!(d.iter().all(|v| v.is_finite()));
    }
}
