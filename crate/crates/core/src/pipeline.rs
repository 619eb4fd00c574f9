//! End-to-end segmentation of one probability stack.

use crate::error::{contract, Result};
use crate::feature::{features_from_probabilities, ProbabilityStack, CAVITY, DEFAULT_CLAMP_FLOOR};
use crate::field::{LabelMap, ScalarField};
use crate::metrics::label_from_phi;
use crate::sdf::initialize_phi;
use crate::solver::{evolve, SolveReport, SolverParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    pub solver: SolverParams,
    /// Region channel thresholded to build the initial level set (1-based).
    pub init_channel: usize,
    pub threshold: f64,
    pub clamp_floor: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            solver: SolverParams::default(),
            init_channel: CAVITY as usize,
            threshold: 0.5,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub initial_phi: ScalarField,
    pub report: SolveReport,
    pub labels: LabelMap,
}

/// Features -> initial signed distance -> evolution -> hard labels.
pub fn segment(stack: &ProbabilityStack, config: &SegmentConfig) -> Result<Segmentation> {
    if stack.region_count() != config.solver.levels.region_count() {
        return contract(format!(
            "stack has {} region channels but {} levels were given (need n - 1)",
            stack.region_count(),
            config.solver.levels.values().len()
        ));
    }
    let features = features_from_probabilities(stack, config.clamp_floor)?;
    let initial_phi = initialize_phi(stack, config.init_channel, config.threshold)?;
    let report = evolve(&initial_phi, &features, &config.solver)?;
    let labels = label_from_phi(&report.final_phi, &config.solver.levels);
    Ok(Segmentation {
        initial_phi,
        report,
        labels,
    })
}
