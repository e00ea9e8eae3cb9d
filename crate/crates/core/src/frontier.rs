//! Cross-group nearest neighbors and near-frontier selection.
//!
//! A unit is "near the frontier" when its nearest neighbor in the opposite
//! treatment group lies within `epsilon`. No description of the frontier
//! itself is ever needed.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierInfo {
    /// Nearest opposite-group unit of each unit.
    pub nn_index: Vec<usize>,
    pub nn_distance: Vec<f64>,
    /// Near-frontier indicator; all false until [`FrontierInfo::set_weights`].
    pub w: Vec<bool>,
    pub epsilon: Option<f64>,
    group_of: Vec<bool>,
}

impl FrontierInfo {
    /// Marks units with `nn_distance ≤ epsilon`, failing when either group
    /// ends up with no marked unit.
    pub fn set_weights(&self, epsilon: f64) -> Result<FrontierInfo> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let out = self.with_epsilon(epsilon);
        let counts = out.near_counts();
        for group in [0u8, 1u8] {
            if counts[group as usize] == 0 {
                return Err(Error::NoFrontierUnits { group, epsilon });
            }
        }
        Ok(out)
    }

    /// Same as [`FrontierInfo::set_weights`] without the emptiness check.
    pub fn with_epsilon(&self, epsilon: f64) -> FrontierInfo {
        let w = self.nn_distance.iter().map(|&dist| dist <= epsilon).collect();
        FrontierInfo {
            w,
            epsilon: Some(epsilon),
            ..self.clone()
        }
    }

    /// Near-frontier counts as `[untreated, treated]`.
    pub fn near_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for (&w, &g) in self.w.iter().zip(&self.group_of) {
            if w {
                c[g as usize] += 1;
            }
        }
        c
    }

    /// Near-frontier units of one group, in row order.
    pub fn near_units(&self, group: bool) -> Vec<usize> {
        (0..self.w.len())
            .filter(|&i| self.w[i] && self.group_of[i] == group)
            .collect()
    }
}

/// Nearest opposite-group neighbor of every unit, using prebuilt indexes
/// over the treated and untreated rows.
pub fn cross_nn_indexed(ds: &Dataset, treated: &SpatialIndex, untreated: &SpatialIndex) -> FrontierInfo {
    let found: Vec<(usize, f64)> = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            let other = if ds.d()[i] { untreated } else { treated };
            let (j, d2) = other
                .nearest(ds.x_row(i))
                .expect("both groups are nonempty in a valid dataset");
            (j, d2.sqrt())
        })
        .collect();
    let (nn_index, nn_distance) = found.into_iter().unzip();
    FrontierInfo {
        nn_index,
        nn_distance,
        w: vec![false; ds.n()],
        epsilon: None,
        group_of: ds.d().to_vec(),
    }
}

pub fn cross_nn(ds: &Dataset) -> FrontierInfo {
    let (treated, untreated) = ds.partition();
    let ti = SpatialIndex::build(ds.x(), ds.k(), &treated);
    let ui = SpatialIndex::build(ds.x(), ds.k(), &untreated);
    cross_nn_indexed(ds, &ti, &ui)
}

/// `(min, max)` of fitted values at near-frontier units: the estimated
/// domain of the transfer function.
pub fn domain_endpoints(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyFrontierSample);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}
