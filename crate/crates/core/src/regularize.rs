//! Smoothed Heaviside/Dirac pair and the nested characteristic functions.
//!
//! `H_eps(z) = 1/2 (1 + 2/pi atan(z / eps))` and its exact derivative
//! `delta_eps(z) = eps / (pi (eps^2 + z^2))`. Both have global support, so
//! level lines that start far from their target level still feel a force.
//!
//! Region `i` of `n` is selected by the levels `c_1 < ... < c_{n-1}`:
//!
//! ```text
//! chi_1 = H(c_1 - phi)
//! chi_i = H(phi - c_{i-1}) - H(phi - c_i)     1 < i < n
//! chi_n = H(phi - c_{n-1})
//! ```
//!
//! For a sharp Heaviside the interior band equals
//! `H(phi - c_{i-1}) H(c_i - phi)`. The difference form keeps the
//! telescoping sum `sum_i chi_i = 1` exact after smoothing as well.

use std::f64::consts::PI;

use crate::error::{contract, Result};

/// Regularisation width `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing(f64);

impl Smoothing {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return contract(format!(
                "epsilon must be positive and finite, got {epsilon}"
            ));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(&self) -> f64 {
        self.0
    }
}

impl Default for Smoothing {
    fn default() -> Self {
        Self(1.5)
    }
}

/// Strictly increasing levels `c_1 < ... < c_{n-1}`; `n = len + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels(Vec<f64>);

impl Levels {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return contract("at least one level is required (n >= 2 regions)");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return contract("levels must be finite");
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return contract(format!(
                "levels must be strictly increasing, got {values:?}"
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn region_count(&self) -> usize {
        self.0.len() + 1
    }

    pub(crate) fn check_region(&self, region: usize) -> Result<()> {
        if region == 0 || region > self.region_count() {
            return contract(format!(
                "region index {region} outside 1..={}",
                self.region_count()
            ));
        }
        Ok(())
    }
}

impl Default for Levels {
    fn default() -> Self {
        Self(vec![0.0, 8.0])
    }
}

#[inline]
pub fn heaviside_smooth(z: f64, s: Smoothing) -> f64 {
    0.5 + (z / s.0).atan() / PI
}

#[inline]
pub fn dirac_smooth(z: f64, s: Smoothing) -> f64 {
    let e = s.0;
    e / (PI * (e * e + z * z))
}

/// Soft membership of `phi_value` in region `region` (1-based).
pub fn characteristic(phi_value: f64, region: usize, levels: &Levels, s: Smoothing) -> Result<f64> {
    levels.check_region(region)?;
    Ok(characteristic_unchecked(
        phi_value,
        region,
        levels.values(),
        s,
    ))
}

/// `d chi_region / d phi` at `phi_value`.
pub fn characteristic_derivative(
    phi_value: f64,
    region: usize,
    levels: &Levels,
    s: Smoothing,
) -> Result<f64> {
    levels.check_region(region)?;
    Ok(characteristic_derivative_unchecked(
        phi_value,
        region,
        levels.values(),
        s,
    ))
}

#[inline]
pub(crate) fn characteristic_unchecked(phi: f64, region: usize, c: &[f64], s: Smoothing) -> f64 {
    let n = c.len() + 1;
    if region == 1 {
        heaviside_smooth(c[0] - phi, s)
    } else if region == n {
        heaviside_smooth(phi - c[n - 2], s)
    } else {
        heaviside_smooth(phi - c[region - 2], s) - heaviside_smooth(phi - c[region - 1], s)
    }
}

#[inline]
pub(crate) fn characteristic_derivative_unchecked(
    phi: f64,
    region: usize,
    c: &[f64],
    s: Smoothing,
) -> f64 {
    let n = c.len() + 1;
    if region == 1 {
        -dirac_smooth(c[0] - phi, s)
    } else if region == n {
        dirac_smooth(phi - c[n - 2], s)
    } else {
        dirac_smooth(phi - c[region - 2], s) - dirac_smooth(phi - c[region - 1], s)
    }
}

/// All `n` memberships at once with one `atan` per level; bitwise equal to
/// calling [`characteristic`] for each region.
#[inline]
pub(crate) fn memberships(phi: f64, c: &[f64], s: Smoothing, out: &mut [f64]) {
    let n = c.len() + 1;
    debug_assert_eq!(out.len(), n);
    // H(phi - c_k) = 0.5 + t_k and H(c_k - phi) = 0.5 - t_k (atan is odd)
    let mut prev = 0.0;
    for (k, &ck) in c.iter().enumerate() {
        let t = ((phi - ck) / s.0).atan() / PI;
        out[k] = if k == 0 {
            0.5 - t
        } else {
            (0.5 + prev) - (0.5 + t)
        };
        prev = t;
    }
    out[n - 1] = 0.5 + prev;
}

/// `sum_i f_i dchi_i/dphi` with one Dirac evaluation per level.
#[inline]
pub(crate) fn weighted_membership_derivative(phi: f64, c: &[f64], s: Smoothing, f: &[f64]) -> f64 {
    // dchi_k/dphi = delta_{k-1} - delta_k with delta_0 = delta_n = 0
    c.iter()
        .enumerate()
        .map(|(k, &ck)| dirac_smooth(phi - ck, s) * (f[k + 1] - f[k]))
        .sum()
}
