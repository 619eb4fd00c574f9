//! Energy, weighted curvature, and gradient-descent evolution of the nested
//! level set function.
//!
//! The discrete energy is
//!
//! ```text
//! E(phi) = sum_i sum_x f_i chi_i(phi)
//!        + lambda sum_{i<n} sum_x g delta_eps(phi - c_i) |grad phi|
//! ```
//!
//! and each explicit step moves `phi` along
//!
//! ```text
//! F = -sum_i f_i dchi_i/dphi + lambda kappa_g sum_{i<n} delta_eps(phi - c_i)
//! ```
//!
//! with `kappa_g = div(g grad phi / |grad phi|)` on the half-point grid.
//! All forces of a step are computed from the previous iterate.

use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::feature::FeatureSet;
use crate::field::{central_gradient, GridShape, ScalarField};
use crate::metrics::label_from_phi;
use crate::regularize::{
    dirac_smooth, memberships, weighted_membership_derivative, Levels, Smoothing,
};
use crate::sdf::{fast_sweep_sdf, BinaryMask};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Boundary-length weight.
    pub lambda: f64,
    pub smoothing: Smoothing,
    pub levels: Levels,
    pub time_step: f64,
    pub iterations: usize,
    /// Lower bound on `|grad phi|` in the curvature denominator.
    pub grad_floor: f64,
    /// Record the energy every this many iterations (the last iteration is
    /// always recorded).
    pub trace_every: usize,
    /// Reset `phi` to the signed distance of `{phi < c_1}` every this many
    /// iterations. Off by default; this discards the position of the outer
    /// level lines.
    pub redistance_every: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            smoothing: Smoothing::default(),
            levels: Levels::default(),
            time_step: 0.1,
            iterations: 200,
            grad_floor: 1e-8,
            trace_every: 1,
            redistance_every: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return contract(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return contract(format!(
                "time step must be positive, got {}",
                self.time_step
            ));
        }
        if !(self.grad_floor > 0.0 && self.grad_floor.is_finite()) {
            return contract(format!(
                "grad floor must be positive, got {}",
                self.grad_floor
            ));
        }
        if self.trace_every == 0 {
            return contract("trace_every must be >= 1");
        }
        if self.redistance_every == Some(0) {
            return contract("redistance interval must be >= 1");
        }
        Ok(())
    }

    fn check_features(&self, phi: &ScalarField, features: &FeatureSet) -> Result<()> {
        self.validate()?;
        phi.shape().ensure_same(&features.shape())?;
        if features.region_count() != self.levels.region_count() {
            return contract(format!(
                "{} region features but {} levels (need n - 1)",
                features.region_count(),
                self.levels.values().len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_phi: ScalarField,
    /// `(iteration, energy)`, starting with iteration 0.
    pub energy_trace: Vec<(usize, f64)>,
    pub iterations_run: usize,
    /// Largest `|phi_new - phi_old|` of each iteration, in order.
    pub max_update: Vec<f64>,
}

fn rows(shape: GridShape) -> impl IndexedParallelIterator<Item = usize> {
    (0..shape.height()).into_par_iter()
}

/// Discrete nested level set energy (unit pixel area).
pub fn energy(phi: &ScalarField, features: &FeatureSet, params: &SolverParams) -> Result<f64> {
    params.check_features(phi, features)?;
    Ok(energy_unchecked(phi, features, params))
}

fn energy_unchecked(phi: &ScalarField, features: &FeatureSet, params: &SolverParams) -> f64 {
    let shape = phi.shape();
    let w = shape.width();
    let c = params.levels.values();
    let s = params.smoothing;
    let n = c.len() + 1;
    let (dx, dy) = if params.lambda > 0.0 {
        let (dx, dy) = central_gradient(phi);
        (Some(dx), Some(dy))
    } else {
        (None, None)
    };
    let f = features.regions();
    let g = features.edge().values();
    let row_sums: Vec<f64> = rows(shape)
        .map(|r| {
            let mut acc = 0.0;
            let mut chi = vec![0.0; n];
            // several parallel arrays share the pixel index
            #[allow(clippy::needless_range_loop)]
            for i in r * w..(r + 1) * w {
                let p = phi.values()[i];
                memberships(p, c, s, &mut chi);
                for k in 0..n {
                    acc += f[k].values()[i] * chi[k];
                }
                if let (Some(dx), Some(dy)) = (&dx, &dy) {
                    let (gx, gy) = (dx.values()[i], dy.values()[i]);
                    let grad = (gx * gx + gy * gy).sqrt();
                    let delta_sum: f64 = c.iter().map(|&ci| dirac_smooth(p - ci, s)).sum();
                    acc += params.lambda * g[i] * delta_sum * grad;
                }
            }
            acc
        })
        .collect();
    row_sums.iter().sum()
}

/// `div(g grad phi / max(|grad phi|, grad_floor))` with fluxes on the
/// half-point grid.
///
/// At each half-point the normal component of `grad phi` is the one-sided
/// difference across it and the transverse component is the average of the
/// central differences on either side. `g` is averaged onto the half-point.
/// Fluxes through the outer boundary vanish.
pub fn weighted_curvature(
    phi: &ScalarField,
    g: &ScalarField,
    grad_floor: f64,
) -> Result<ScalarField> {
    phi.shape().ensure_same(&g.shape())?;
    if grad_floor.is_nan() || grad_floor <= 0.0 {
        return contract(format!("grad floor must be positive, got {grad_floor}"));
    }
    let shape = phi.shape();
    let (h, w) = (shape.height(), shape.width());
    let (cx, cy) = central_gradient(phi);
    let (p, gv, cx, cy) = (phi.values(), g.values(), cx.values(), cy.values());

    // flux through the east (c + 1/2) and south (r + 1/2) faces of each
    // pixel; the west/north faces are the east/south faces of the neighbours
    let mut east = vec![0.0; shape.len()];
    let mut south = vec![0.0; shape.len()];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                let normal = p[i + 1] - p[i];
                let transverse = 0.5 * (cy[i] + cy[i + 1]);
                let gh = 0.5 * (gv[i] + gv[i + 1]);
                east[i] = gh * normal
                    / (normal * normal + transverse * transverse)
                        .sqrt()
                        .max(grad_floor);
            }
            if r + 1 < h {
                let normal = p[i + w] - p[i];
                let transverse = 0.5 * (cx[i] + cx[i + w]);
                let gh = 0.5 * (gv[i] + gv[i + w]);
                south[i] = gh * normal
                    / (normal * normal + transverse * transverse)
                        .sqrt()
                        .max(grad_floor);
            }
        }
    }
    let mut kappa = vec![0.0; shape.len()];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let west = if c > 0 { east[i - 1] } else { 0.0 };
            let north = if r > 0 { south[i - w] } else { 0.0 };
            kappa[i] = (east[i] - west) + (south[i] - north);
        }
    }
    Ok(ScalarField::from_vec_unchecked(shape, kappa))
}

/// Update direction of one explicit step.
pub fn force_field(
    phi: &ScalarField,
    features: &FeatureSet,
    params: &SolverParams,
) -> Result<ScalarField> {
    params.check_features(phi, features)?;
    Ok(force_field_unchecked(phi, features, params))
}

fn force_field_unchecked(
    phi: &ScalarField,
    features: &FeatureSet,
    params: &SolverParams,
) -> ScalarField {
    let shape = phi.shape();
    let w = shape.width();
    let c = params.levels.values();
    let s = params.smoothing;
    let n = c.len() + 1;
    let kappa = if params.lambda > 0.0 {
        Some(
            weighted_curvature(phi, features.edge(), params.grad_floor)
                .expect("shapes checked by caller"),
        )
    } else {
        None
    };
    let f = features.regions();
    let out: Vec<f64> = rows(shape)
        .flat_map_iter(|r| {
            let kappa = &kappa;
            let mut fp = vec![0.0; n];
            (r * w..(r + 1) * w).map(move |i| {
                let p = phi.values()[i];
                for k in 0..n {
                    fp[k] = f[k].values()[i];
                }
                let data = -weighted_membership_derivative(p, c, s, &fp);
                match kappa {
                    Some(kappa) => {
                        let delta_sum: f64 = c.iter().map(|&ci| dirac_smooth(p - ci, s)).sum();
                        data + params.lambda * kappa.values()[i] * delta_sum
                    }
                    None => data,
                }
            })
        })
        .collect();
    ScalarField::from_vec_unchecked(shape, out)
}

/// Runs `params.iterations` explicit steps from `phi0`.
pub fn evolve(
    phi0: &ScalarField,
    features: &FeatureSet,
    params: &SolverParams,
) -> Result<SolveReport> {
    params.check_features(phi0, features)?;
    let shape = phi0.shape();
    let mut phi = phi0.clone();
    let mut energy_trace = vec![(0, energy_unchecked(&phi, features, params))];
    let mut max_update = Vec::with_capacity(params.iterations);

    for iteration in 1..=params.iterations {
        let force = force_field_unchecked(&phi, features, params);
        let mut values = phi.into_values();
        let mut largest = 0.0f64;
        for (v, &fv) in values.iter_mut().zip(force.values()) {
            let step = params.time_step * fv;
            *v += step;
            if !v.is_finite() {
                return Err(Error::NumericInstability { iteration });
            }
            largest = largest.max(step.abs());
        }
        phi = ScalarField::from_vec_unchecked(shape, values);
        max_update.push(largest);

        if let Some(k) = params.redistance_every {
            if iteration % k == 0 {
                phi = redistance(&phi, &params.levels)?;
            }
        }
        if iteration % params.trace_every == 0 || iteration == params.iterations {
            let e = energy_unchecked(&phi, features, params);
            if !e.is_finite() {
                return Err(Error::NumericInstability { iteration });
            }
            energy_trace.push((iteration, e));
        }
    }

    Ok(SolveReport {
        final_phi: phi,
        energy_trace,
        iterations_run: params.iterations,
        max_update,
    })
}

fn redistance(phi: &ScalarField, levels: &Levels) -> Result<ScalarField> {
    let labels = label_from_phi(phi, levels);
    let inside = labels.labels().iter().map(|&l| l == 1).collect();
    let mask = BinaryMask::new(phi.shape(), inside)?;
    match fast_sweep_sdf(&mask) {
        Ok(sdf) => Ok(ScalarField::from_vec_unchecked(
            phi.shape(),
            sdf.values()
                .iter()
                .map(|v| v + levels.values()[0])
                .collect(),
        )),
        // region 1 vanished or filled the grid; nothing to re-seed from
        Err(_) => Ok(phi.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::DEFAULT_CLAMP_FLOOR;

    fn shape(h: usize, w: usize) -> GridShape {
        GridShape::new(h, w).unwrap()
    }

    fn constant_features(s: GridShape, values: &[f64], g: f64) -> FeatureSet {
        FeatureSet::new(
            values
                .iter()
                .map(|&v| ScalarField::constant(s, v))
                .collect(),
            ScalarField::constant(s, g),
            DEFAULT_CLAMP_FLOOR,
        )
        .unwrap()
    }

    fn circle_sdf(n: usize, radius: f64) -> ScalarField {
        let c = (n as f64 - 1.0) / 2.0;
        ScalarField::from_fn(shape(n, n), |r, cc| {
            ((r as f64 - c).powi(2) + (cc as f64 - c).powi(2)).sqrt() - radius
        })
        .unwrap()
    }

    #[test]
    fn equal_features_give_constant_energy_and_no_data_force() {
        let s = shape(8, 9);
        let feats = constant_features(s, &[2.5, 2.5, 2.5], 0.3);
        let params = SolverParams {
            lambda: 0.0,
            ..SolverParams::default()
        };
        let phi = ScalarField::from_fn(s, |r, c| (r as f64 - 4.0) * 3.0 + c as f64).unwrap();
        let e = energy(&phi, &feats, &params).unwrap();
        assert!((e - 2.5 * 72.0).abs() < 1e-10);
        let f = force_field(&phi, &feats, &params).unwrap();
        assert!(f.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_edge_weight_removes_boundary_term() {
        let s = shape(10, 10);
        let feats = constant_features(s, &[0.0, 1.0, 3.0], 0.0);
        let phi = circle_sdf(10, 3.0);
        let with = SolverParams::default();
        let without = SolverParams {
            lambda: 0.0,
            ..SolverParams::default()
        };
        assert_eq!(
            energy(&phi, &feats, &with).unwrap(),
            energy(&phi, &feats, &without).unwrap()
        );
        let k = weighted_curvature(&phi, feats.edge(), 1e-8).unwrap();
        assert!(k.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planar_ramp_has_zero_curvature() {
        let s = shape(20, 20);
        let phi = ScalarField::from_fn(s, |r, c| 0.7 * c as f64 - 1.3 * r as f64).unwrap();
        let g = ScalarField::constant(s, 1.0);
        let k = weighted_curvature(&phi, &g, 1e-8).unwrap();
        for r in 1..19 {
            for c in 1..19 {
                assert!(k.get(r, c).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn circle_curvature_is_inverse_radius() {
        let phi = circle_sdf(100, 20.0);
        let g = ScalarField::constant(phi.shape(), 1.0);
        let k = weighted_curvature(&phi, &g, 1e-8).unwrap();
        let mut checked = 0;
        for (i, &p) in phi.values().iter().enumerate() {
            if p.abs() <= 1.0 {
                assert!(
                    (k.values()[i] - 0.05).abs() <= 0.01,
                    "kappa {}",
                    k.values()[i]
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn curvature_matches_composed_half_point_stencils() {
        use crate::field::{half_point_average, half_point_difference, Axis, Direction};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = shape(9, 11);
        let phi = ScalarField::from_fn(s, |_, _| rng.random_range(-4.0..4.0)).unwrap();
        let g = ScalarField::from_fn(s, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let (cx, cy) = central_gradient(&phi);
        let flux = |axis: Axis, dir: Direction| -> Vec<f64> {
            let transverse_src = if axis == Axis::Col { &cy } else { &cx };
            let normal = half_point_difference(&phi, axis, dir);
            let transverse = half_point_average(transverse_src, axis, dir);
            let gh = half_point_average(&g, axis, dir);
            (0..s.len())
                .map(|i| {
                    let (a, b) = (normal.values()[i], transverse.values()[i]);
                    gh.values()[i] * a / (a * a + b * b).sqrt().max(1e-8)
                })
                .collect()
        };
        let e = flux(Axis::Col, Direction::Forward);
        let wv = flux(Axis::Col, Direction::Backward);
        let so = flux(Axis::Row, Direction::Forward);
        let n = flux(Axis::Row, Direction::Backward);
        let k = weighted_curvature(&phi, &g, 1e-8).unwrap();
        for i in 0..s.len() {
            assert_eq!(k.values()[i], (e[i] - wv[i]) + (so[i] - n[i]));
        }
    }

    #[test]
    fn zero_force_leaves_phi_bitwise_unchanged() {
        let s = shape(12, 12);
        let feats = constant_features(s, &[0.0, 0.0, 0.0], 0.5);
        let params = SolverParams {
            lambda: 0.0,
            iterations: 25,
            ..SolverParams::default()
        };
        let phi0 = circle_sdf(12, 4.0);
        let rep = evolve(&phi0, &feats, &params).unwrap();
        assert_eq!(rep.final_phi, phi0);
        assert_eq!(rep.iterations_run, 25);
        assert_eq!(rep.energy_trace.len(), 26);
        assert!(rep.max_update.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn cheap_region_one_grows() {
        let s = shape(40, 40);
        let feats = constant_features(s, &[0.0, 1.0, 1.0], 0.0);
        let params = SolverParams {
            lambda: 0.0,
            iterations: 60,
            trace_every: 10,
            ..SolverParams::default()
        };
        let phi0 = circle_sdf(40, 5.0);
        let area = |phi: &ScalarField| phi.values().iter().filter(|&&v| v < 0.0).count();
        let mut phi = phi0.clone();
        let mut last = area(&phi);
        for _ in 0..6 {
            let p = SolverParams {
                iterations: 10,
                ..params.clone()
            };
            phi = evolve(&phi, &feats, &p).unwrap().final_phi;
            let a = area(&phi);
            assert!(a >= last);
            last = a;
        }
        assert!(last > area(&phi0));
        // trace bookkeeping
        let rep = evolve(&phi0, &feats, &params).unwrap();
        let iters: Vec<usize> = rep.energy_trace.iter().map(|t| t.0).collect();
        assert_eq!(iters, vec![0, 10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn instability_reports_iteration() {
        let s = shape(6, 6);
        let feats = constant_features(s, &[0.0, 1e300, 1e300], 0.0);
        let params = SolverParams {
            lambda: 0.0,
            time_step: 1e300,
            iterations: 5,
            ..SolverParams::default()
        };
        let phi0 = ScalarField::constant(s, 0.0);
        match evolve(&phi0, &feats, &params) {
            Err(Error::NumericInstability { iteration }) => assert_eq!(iteration, 1),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn parameter_and_shape_checks() {
        let s = shape(6, 6);
        let feats = constant_features(s, &[0.0, 1.0], 0.0);
        let phi = ScalarField::constant(s, 0.0);
        // two features but two levels
        assert!(energy(&phi, &feats, &SolverParams::default()).is_err());
        let bad = SolverParams {
            time_step: 0.0,
            ..SolverParams::default()
        };
        assert!(bad.validate().is_err());
        let other = ScalarField::constant(shape(7, 6), 0.0);
        assert!(weighted_curvature(&phi, &other, 1e-8).is_err());
    }

    #[test]
    fn redistancing_keeps_first_level_line() {
        let s = shape(30, 30);
        let feats = constant_features(s, &[0.0, 1.0, 2.0], 0.2);
        let params = SolverParams {
            iterations: 20,
            redistance_every: Some(5),
            ..SolverParams::default()
        };
        let phi0 = circle_sdf(30, 6.0).map(|v| 3.0 * v).unwrap();
        let rep = evolve(&phi0, &feats, &params).unwrap();
        let before = label_from_phi(&phi0, &params.levels);
        let after = label_from_phi(&rep.final_phi, &params.levels);
        assert!(after.count(1) >= before.count(1));
    }
}
