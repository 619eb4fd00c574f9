//! Hard labels from `phi` and Dice overlap.

use std::collections::BTreeMap;

use crate::error::{contract, Result};
use crate::feature::{CAVITY, MYOCARDIUM};
use crate::field::{LabelMap, ScalarField};
use crate::regularize::Levels;

/// Region 1 below `c_1`, region `i` on `[c_{i-1}, c_i)`, region `n` from
/// `c_{n-1}` up.
pub fn label_from_phi(phi: &ScalarField, levels: &Levels) -> LabelMap {
    let c = levels.values();
    let labels = phi
        .values()
        .iter()
        .map(|&p| c.partition_point(|&ci| ci <= p) as u32 + 1)
        .collect();
    LabelMap::new(phi.shape(), labels, levels.region_count() as u32)
        .expect("labels are in range by construction")
}

/// `2 |A n B| / (|A| + |B|)` for the masks of `region`; 1 when both are empty.
pub fn dice(a: &LabelMap, b: &LabelMap, region: u32) -> Result<f64> {
    a.shape().ensure_same(&b.shape())?;
    if a.regions() != b.regions() {
        return contract(format!(
            "region counts differ: {} vs {}",
            a.regions(),
            b.regions()
        ));
    }
    if region == 0 || region > a.regions() {
        return contract(format!("region {region} outside 1..={}", a.regions()));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (x == region, y == region);
        na += ia as usize;
        nb += ib as usize;
        both += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceReport {
    pub per_region: BTreeMap<u32, f64>,
    pub cavities: f64,
    pub myocardium: f64,
}

impl DiceReport {
    pub fn compute(pred: &LabelMap, truth: &LabelMap) -> Result<Self> {
        let mut per_region = BTreeMap::new();
        for r in 1..=truth.regions() {
            per_region.insert(r, dice(pred, truth, r)?);
        }
        let cavities = per_region[&CAVITY];
        let myocardium = per_region.get(&MYOCARDIUM).copied().unwrap_or(f64::NAN);
        Ok(Self {
            per_region,
            cavities,
            myocardium,
        })
    }

    /// CSV with header `region,dice`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,dice\n");
        for (r, d) in &self.per_region {
            out.push_str(&format!("{r},{d:.6}\n"));
        }
        out.push_str(&format!("cavities,{:.6}\n", self.cavities));
        if self.per_region.contains_key(&MYOCARDIUM) {
            out.push_str(&format!("myocardium,{:.6}\n", self.myocardium));
        }
        out
    }
}

/// Mean of each score over a set of reports.
pub fn mean_report(reports: &[DiceReport]) -> Option<DiceReport> {
    let first = reports.first()?;
    let k = reports.len() as f64;
    let per_region = first
        .per_region
        .keys()
        .map(|&r| {
            let sum: f64 = reports
                .iter()
                .map(|d| d.per_region.get(&r).copied().unwrap_or(0.0))
                .sum();
            (r, sum / k)
        })
        .collect();
    Some(DiceReport {
        per_region,
        cavities: reports.iter().map(|d| d.cavities).sum::<f64>() / k,
        myocardium: reports.iter().map(|d| d.myocardium).sum::<f64>() / k,
    })
}
