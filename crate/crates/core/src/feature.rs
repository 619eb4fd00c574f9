//! Region and edge features from probability maps, plus a synthetic cardiac
//! phantom that supplies probability maps with known ground truth.
//!
//! Channel convention for three regions: 1 = cavities (LV and RV blood
//! pools), 2 = myocardium, 3 = background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};
use crate::field::{GridShape, LabelMap, ScalarField};
use crate::loss::{derive_edge_labels, EdgeLabelMap};

/// Probability floor applied before taking logarithms.
pub const DEFAULT_CLAMP_FLOOR: f64 = 1e-6;

const SIMPLEX_TOLERANCE: f64 = 1e-6;

pub const CAVITY: u32 = 1;
pub const MYOCARDIUM: u32 = 2;
pub const BACKGROUND: u32 = 3;

/// `n` region probability channels on the per-pixel simplex and one edge
/// probability channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    shape: GridShape,
    regions: Vec<ScalarField>,
    edge: ScalarField,
}

impl ProbabilityStack {
    pub fn new(regions: Vec<ScalarField>, edge: ScalarField) -> Result<Self> {
        let shape = edge.shape();
        if regions.len() < 2 {
            return contract(format!(
                "need at least 2 region channels, got {}",
                regions.len()
            ));
        }
        for ch in &regions {
            shape.ensure_same(&ch.shape())?;
        }
        for (k, ch) in regions.iter().chain(std::iter::once(&edge)).enumerate() {
            if let Some(v) = ch.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return contract(format!("channel {} has value {v} outside [0, 1]", k + 1));
            }
        }
        for i in 0..shape.len() {
            let sum: f64 = regions.iter().map(|ch| ch.values()[i]).sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return contract(format!(
                    "region channels sum to {sum} at pixel {i}, expected 1"
                ));
            }
        }
        Ok(Self {
            shape,
            regions,
            edge,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Region channel `index` (1-based).
    pub fn region(&self, index: usize) -> Result<&ScalarField> {
        if index == 0 || index > self.regions.len() {
            return contract(format!(
                "channel {index} outside 1..={}",
                self.regions.len()
            ));
        }
        Ok(&self.regions[index - 1])
    }

    pub fn regions(&self) -> &[ScalarField] {
        &self.regions
    }

    pub fn edge(&self) -> &ScalarField {
        &self.edge
    }

    /// Reorders region channels: output channel `k` is input channel
    /// `order[k]` (1-based). `order` must be a permutation of `1..=n`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.regions.len();
        let mut seen = vec![false; n];
        if order.len() != n {
            return contract(format!(
                "channel order needs {n} entries, got {}",
                order.len()
            ));
        }
        for &k in order {
            if k == 0 || k > n || seen[k - 1] {
                return contract(format!(
                    "channel order {order:?} is not a permutation of 1..={n}"
                ));
            }
            seen[k - 1] = true;
        }
        let regions = order.iter().map(|&k| self.regions[k - 1].clone()).collect();
        Ok(Self {
            shape: self.shape,
            regions,
            edge: self.edge.clone(),
        })
    }

    /// Per-pixel most probable region; ties go to the lower index.
    pub fn argmax_labels(&self) -> LabelMap {
        let labels = (0..self.shape.len())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.regions.len() {
                    if self.regions[k].values()[i] > self.regions[best].values()[i] {
                        best = k;
                    }
                }
                best as u32 + 1
            })
            .collect();
        LabelMap::new(self.shape, labels, self.regions.len() as u32)
            .expect("argmax labels are in range")
    }
}

/// Region features `f_i` (non-negative costs) and edge weight `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    regions: Vec<ScalarField>,
    edge: ScalarField,
    clamp_floor: f64,
}

impl FeatureSet {
    pub fn new(regions: Vec<ScalarField>, edge: ScalarField, clamp_floor: f64) -> Result<Self> {
        if regions.len() < 2 {
            return contract("need at least 2 region features");
        }
        for f in &regions {
            edge.shape().ensure_same(&f.shape())?;
            if f.values().iter().any(|&v| v < 0.0) {
                return contract("region features must be non-negative");
            }
        }
        if edge.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return contract("edge feature must lie in [0, 1]");
        }
        check_floor(clamp_floor)?;
        Ok(Self {
            regions,
            edge,
            clamp_floor,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.edge.shape()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[ScalarField] {
        &self.regions
    }

    pub fn edge(&self) -> &ScalarField {
        &self.edge
    }

    pub fn clamp_floor(&self) -> f64 {
        self.clamp_floor
    }
}

fn check_floor(clamp_floor: f64) -> Result<()> {
    if !(clamp_floor > 0.0 && clamp_floor < 1.0) {
        return contract(format!("clamp floor must lie in (0, 1), got {clamp_floor}"));
    }
    Ok(())
}

/// `-log(max(p, floor))`.
#[inline]
pub fn clamped_neg_log(p: f64, floor: f64) -> f64 {
    -p.max(floor).ln()
}

/// `f_i = -log(max(P_Ri, floor))`, `g = P_E`.
pub fn features_from_probabilities(p: &ProbabilityStack, clamp_floor: f64) -> Result<FeatureSet> {
    check_floor(clamp_floor)?;
    let regions = p
        .regions
        .iter()
        .map(|ch| {
            let v = ch
                .values()
                .iter()
                .map(|&x| clamped_neg_log(x, clamp_floor))
                .collect();
            ScalarField::from_vec_unchecked(p.shape, v)
        })
        .collect();
    Ok(FeatureSet {
        regions,
        edge: p.edge.clone(),
        clamp_floor,
    })
}

/// Geometry and corruption settings for a three-region cardiac phantom.
///
/// The left ventricle is an ellipse flattened on the side facing the right
/// ventricle (`lv_deformation` in `[0, 1)` sets how much). The right
/// ventricle is an outer ellipse minus the left ventricle dilated by the
/// wall thickness, which leaves a crescent separated from the LV by a septum.
/// Myocardium is every non-cavity pixel within `thickness` of a cavity.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub shape: GridShape,
    /// `(row, col)` in pixels.
    pub lv_center: (f64, f64),
    /// Semi-axes `(row, col)` in pixels.
    pub lv_axes: (f64, f64),
    pub lv_deformation: f64,
    pub rv_center: (f64, f64),
    pub rv_axes: (f64, f64),
    pub thickness: f64,
    pub blur_sigma: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Default anatomy on a `size x size` grid, scaled from a 160 px layout.
    pub fn with_size(size: usize) -> Result<Self> {
        let shape = GridShape::new(size, size)?;
        let s = size as f64;
        Ok(Self {
            shape,
            lv_center: (0.5 * s, 0.58 * s),
            lv_axes: (0.14 * s, 0.12 * s),
            lv_deformation: 0.25,
            rv_center: (0.5 * s, 0.40 * s),
            rv_axes: (0.21 * s, 0.2 * s),
            thickness: (6.0 * s / 160.0).max(2.0),
            blur_sigma: 2.0,
            noise_rate: 0.05,
            seed: 42,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.thickness.is_nan() || self.thickness < 2.0 {
            return contract(format!(
                "myocardium thickness must be >= 2 px, got {}",
                self.thickness
            ));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return contract("blur sigma must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return contract("noise rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.lv_deformation) {
            return contract("lv deformation must lie in [0, 1)");
        }
        let axes = [
            self.lv_axes.0,
            self.lv_axes.1,
            self.rv_axes.0,
            self.rv_axes.1,
        ];
        if axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return contract("ellipse axes must be positive");
        }
        Ok(())
    }
}

/// Ground truth and oracle probabilities for one phantom slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub labels: LabelMap,
    pub edges: EdgeLabelMap,
    pub stack: ProbabilityStack,
}

fn lv_mask(spec: &PhantomSpec) -> Vec<bool> {
    let (h, w) = (spec.shape.height(), spec.shape.width());
    let (cr, cc) = spec.lv_center;
    let (ar, ac) = spec.lv_axes;
    let toward_rv = (spec.rv_center.0 - cr, spec.rv_center.1 - cc);
    let norm = (toward_rv.0 * toward_rv.0 + toward_rv.1 * toward_rv.1).sqrt();
    let dir = if norm > 0.0 {
        (toward_rv.0 / norm, toward_rv.1 / norm)
    } else {
        (0.0, 0.0)
    };
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = ((r as f64 - cr) / ar, (c as f64 - cc) / ac);
            let rho = (dr * dr + dc * dc).sqrt();
            // radial limit shrinks on the septal side
            let cos = if rho > 0.0 {
                (dr * dir.0 + dc * dir.1) / rho
            } else {
                0.0
            };
            let limit = 1.0 - spec.lv_deformation * cos.max(0.0).powi(2);
            out[r * w + c] = rho <= limit;
        }
    }
    out
}

fn dilate(mask: &[bool], shape: GridShape, radius: f64) -> Vec<bool> {
    let (h, w) = (shape.height() as isize, shape.width() as isize);
    let k = radius.floor() as isize;
    let offsets: Vec<(isize, isize)> = (-k..=k)
        .flat_map(|dr| (-k..=k).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64) <= radius * radius)
        .collect();
    let mut out = vec![false; mask.len()];
    for r in 0..h {
        for c in 0..w {
            out[(r * w + c) as usize] = offsets.iter().any(|&(dr, dc)| {
                let (rr, cc) = (r + dr, c + dc);
                rr >= 0 && rr < h && cc >= 0 && cc < w && mask[(rr * w + cc) as usize]
            });
        }
    }
    out
}

fn phantom_labels(spec: &PhantomSpec) -> Result<LabelMap> {
    let shape = spec.shape;
    let (h, w) = (shape.height(), shape.width());
    let lv = lv_mask(spec);
    let lv_grown = dilate(&lv, shape, spec.thickness);
    let (cr, cc) = spec.rv_center;
    let (ar, ac) = spec.rv_axes;
    let mut cavity = lv.clone();
    let mut rv_count = 0usize;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let (dr, dc) = ((r as f64 - cr) / ar, (c as f64 - cc) / ac);
            if dr * dr + dc * dc <= 1.0 && !lv_grown[i] {
                cavity[i] = true;
                rv_count += 1;
            }
        }
    }
    if !lv.iter().any(|&b| b) || rv_count == 0 {
        return contract("phantom geometry leaves an empty ventricle");
    }
    let wall = dilate(&cavity, shape, spec.thickness);
    for r in 0..h {
        for c in 0..w {
            let margin = r.min(c).min(h - 1 - r).min(w - 1 - c);
            if wall[r * w + c] && margin < 2 {
                return contract(
                    "phantom geometry does not fit inside the grid with a 2 px margin",
                );
            }
        }
    }
    let labels = (0..h * w)
        .map(|i| {
            if cavity[i] {
                CAVITY
            } else if wall[i] {
                MYOCARDIUM
            } else {
                BACKGROUND
            }
        })
        .collect();
    LabelMap::new(shape, labels, 3)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable truncated Gaussian blur (radius `ceil(3 sigma)`), replicated
/// borders. `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(values: &[f64], shape: GridShape, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (shape.height() as isize, shape.width() as isize);
    let mut tmp = vec![0.0; values.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, wt) in kernel.iter().enumerate() {
                let cc = (c + k as isize - radius).clamp(0, w - 1);
                acc += wt * values[(r * w + cc) as usize];
            }
            tmp[(r * w + c) as usize] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, wt) in kernel.iter().enumerate() {
                let rr = (r + k as isize - radius).clamp(0, h - 1);
                acc += wt * tmp[(rr * w + c) as usize];
            }
            out[(r * w + c) as usize] = acc;
        }
    }
    out
}

/// Builds the phantom: labels, 4-connected transition edges, and a
/// probability stack from noisy, blurred one-hot labels.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let shape = spec.shape;
    let labels = phantom_labels(spec)?;
    let edges = derive_edge_labels(&labels);
    let n = labels.regions() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy: Vec<u32> = labels
        .labels()
        .iter()
        .map(|&l| {
            let u: f64 = rng.random();
            if u < spec.noise_rate {
                // uniform over the other n - 1 labels
                let k = rng.random_range(1..n as u32);
                (l - 1 + k) % n as u32 + 1
            } else {
                l
            }
        })
        .collect();

    let mut channels: Vec<Vec<f64>> = (1..=n as u32)
        .map(|k| {
            let onehot: Vec<f64> = noisy.iter().map(|&l| f64::from(l == k)).collect();
            gaussian_blur(&onehot, shape, spec.blur_sigma)
        })
        .collect();
    for i in 0..shape.len() {
        let sum: f64 = channels.iter().map(|ch| ch[i]).sum();
        for ch in channels.iter_mut() {
            ch[i] = (ch[i] / sum).clamp(0.0, 1.0);
        }
    }
    let edge_indicator: Vec<f64> = edges.labels().iter().map(|&e| f64::from(e)).collect();
    let edge = gaussian_blur(&edge_indicator, shape, spec.blur_sigma)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();

    let stack = ProbabilityStack::new(
        channels
            .into_iter()
            .map(|v| ScalarField::from_vec_unchecked(shape, v))
            .collect(),
        ScalarField::from_vec_unchecked(shape, edge),
    )?;
    Ok(Phantom {
        labels,
        edges,
        stack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shape(h: usize, w: usize) -> GridShape {
        GridShape::new(h, w).unwrap()
    }

    fn stack_from(p1: Vec<f64>, s: GridShape) -> ProbabilityStack {
        let p2: Vec<f64> = p1.iter().map(|v| 1.0 - v).collect();
        ProbabilityStack::new(
            vec![
                ScalarField::new(s, p1).unwrap(),
                ScalarField::new(s, p2).unwrap(),
            ],
            ScalarField::constant(s, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn stack_validation() {
        let s = shape(3, 3);
        let half = ScalarField::constant(s, 0.5);
        let third = ScalarField::constant(s, 0.3);
        assert!(ProbabilityStack::new(vec![half.clone(), half.clone()], half.clone()).is_ok());
        assert!(ProbabilityStack::new(vec![half.clone(), third.clone()], half.clone()).is_err());
        assert!(ProbabilityStack::new(vec![half.clone()], half.clone()).is_err());
        let big = ScalarField::constant(s, 1.5);
        assert!(ProbabilityStack::new(vec![half.clone(), half.clone()], big).is_err());
    }

    #[test]
    fn feature_values() {
        let s = shape(3, 3);
        let mut p = vec![0.5; 9];
        p[0] = 1.0;
        p[1] = 0.0;
        let f = features_from_probabilities(&stack_from(p, s), 1e-6).unwrap();
        let f1 = f.regions()[0].values();
        assert_eq!(f1[0], 0.0);
        assert_abs_diff_eq!(f1[1], 13.815510557964274, epsilon = 1e-12);
        assert_abs_diff_eq!(f1[2], std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(features_from_probabilities(&stack_from(vec![0.5; 9], s), 0.0).is_err());
        assert!(features_from_probabilities(&stack_from(vec![0.5; 9], s), 1.0).is_err());
    }

    #[test]
    fn features_are_antitone() {
        let s = shape(3, 3);
        let p: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let f = features_from_probabilities(&stack_from(p, s), 1e-6).unwrap();
        let f1 = f.regions()[0].values();
        assert!(f1.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn permutation() {
        let s = shape(3, 3);
        let st = stack_from(vec![0.2; 9], s);
        let sw = st.permuted(&[2, 1]).unwrap();
        assert_eq!(sw.region(1).unwrap(), st.region(2).unwrap());
        assert!(st.permuted(&[1, 1]).is_err());
        assert!(st.permuted(&[1]).is_err());
    }

    fn clean_spec() -> PhantomSpec {
        let mut spec = PhantomSpec::with_size(96).unwrap();
        spec.blur_sigma = 0.0;
        spec.noise_rate = 0.0;
        spec
    }

    #[test]
    fn clean_phantom_is_one_hot_and_consistent() {
        let ph = generate_phantom(&clean_spec()).unwrap();
        for ch in ph.stack.regions() {
            assert!(ch.values().iter().all(|&v| v == 0.0 || v == 1.0));
        }
        assert_eq!(ph.stack.argmax_labels(), ph.labels);
        for k in 1..=3 {
            assert!(ph.labels.count(k) > 0);
        }
        // argmin of features equals truth
        let f = features_from_probabilities(&ph.stack, DEFAULT_CLAMP_FLOOR).unwrap();
        for i in 0..ph.labels.labels().len() {
            let best = (0..3)
                .min_by(|&a, &b| {
                    f.regions()[a].values()[i]
                        .partial_cmp(&f.regions()[b].values()[i])
                        .unwrap()
                })
                .unwrap();
            assert_eq!(best as u32 + 1, ph.labels.labels()[i]);
        }
    }

    #[test]
    fn phantom_has_septum_between_ventricles() {
        // every cavity pixel touching myocardium only; LV and RV never touch
        let spec = clean_spec();
        let ph = generate_phantom(&spec).unwrap();
        let lv = lv_mask(&spec);
        let w = spec.shape.width();
        for (i, &l) in ph.labels.labels().iter().enumerate() {
            if l == CAVITY && !lv[i] {
                let (r, c) = (i / w, i % w);
                for (dr, dc) in [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)] {
                    let j = ((r as isize + dr) as usize) * w + (c as isize + dc) as usize;
                    assert!(!lv[j], "RV pixel adjacent to LV");
                }
            }
        }
    }

    #[test]
    fn noisy_phantom_stays_on_simplex_and_is_deterministic() {
        let spec = PhantomSpec::with_size(64).unwrap();
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a, b);
        for i in 0..spec.shape.len() {
            let sum: f64 = a.stack.regions().iter().map(|c| c.values()[i]).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(generate_phantom(&other).unwrap().stack, a.stack);
    }

    #[test]
    fn phantom_geometry_is_validated() {
        let mut spec = PhantomSpec::with_size(96).unwrap();
        spec.thickness = 1.0;
        assert!(generate_phantom(&spec).is_err());
        let mut spec = PhantomSpec::with_size(96).unwrap();
        spec.rv_axes = (60.0, 60.0);
        assert!(generate_phantom(&spec).is_err());
        let mut spec = PhantomSpec::with_size(96).unwrap();
        spec.noise_rate = 1.0;
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let s = shape(12, 9);
        let c = vec![0.7; s.len()];
        let b = gaussian_blur(&c, s, 1.3);
        assert!(b.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let mut spike = vec![0.0; s.len()];
        spike[6 * 9 + 4] = 1.0;
        let b = gaussian_blur(&spike, s, 1.0);
        assert_abs_diff_eq!(b.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(b[6 * 9 + 4] > b[6 * 9 + 5]);
    }
}
