//! Locally extrapolated first-stage fits, the transfer curve q and CATE
//! imputation.
//!
//! For a unit on the `1 − d` side, `g̃_d` fits group `d` at the unit's
//! nearest group-`d` neighbor and follows the fitted gradient back to the
//! unit. Regressing near-frontier outcomes on `g̃_d` gives `q̂_{1−d}`, the map
//! from the group-`d` conditional mean to the opposite potential outcome.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::loclin::{argmin_prefer_last, check_grid, log_grid, mean_if_mostly_ok, GroupSmoother};
use crate::wls::WlsAccumulator;

/// Runs fail when more than this share of the grid lacks support.
pub const MAX_DROPPED_SHARE: f64 = 0.20;

/// Pointwise confidence band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub draws_used: usize,
    pub draws_discarded: usize,
}

/// Estimated transfer curve `q̂_target` on a grid over its estimated domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub y_low: f64,
    pub y_high: f64,
    /// Potential outcome returned by the curve (0 or 1).
    pub target: u8,
    pub bands: Option<Bands>,
    /// Grid points dropped for lack of support.
    pub dropped: Vec<f64>,
    /// Second-stage bandwidth.
    pub b: f64,
    /// Units in the second-stage regression.
    pub n_sample: usize,
    /// Near-frontier units whose extrapolated fit failed.
    pub n_failed_units: usize,
    pub rearranged: bool,
}

impl QCurve {
    /// Linear interpolation on the grid; `None` outside the grid span.
    pub fn eval(&self, v: f64) -> Option<f64> {
        interpolate(&self.grid, &self.values, v)
    }

    /// Whether `v` lies in the closed estimated domain and the curve can be
    /// evaluated there.
    pub fn contains(&self, v: f64) -> bool {
        self.y_low <= v && v <= self.y_high && self.eval(v).is_some()
    }

    pub fn band_at(&self, v: f64) -> Option<(f64, f64)> {
        let b = self.bands.as_ref()?;
        Some((
            interpolate(&self.grid, &b.lower, v)?,
            interpolate(&self.grid, &b.upper, v)?,
        ))
    }
}

pub(crate) fn interpolate(grid: &[f64], values: &[f64], v: f64) -> Option<f64> {
    let (first, last) = (*grid.first()?, *grid.last()?);
    if !(first <= v && v <= last) {
        return None;
    }
    let j = grid.partition_point(|&g| g < v);
    if grid[j] == v {
        return Some(values[j]);
    }
    let (g0, g1) = (grid[j - 1], grid[j]);
    let t = (v - g0) / (g1 - g0);
    Some(values[j - 1] + t * (values[j] - values[j - 1]))
}

/// Like [`interpolate`], but continues the end segments linearly beyond the
/// grid span.
pub(crate) fn interpolate_extended(grid: &[f64], values: &[f64], v: f64) -> Option<f64> {
    let n = grid.len();
    if n < 2 {
        return values.first().copied();
    }
    let (a, b) = if v < grid[0] {
        (0, 1)
    } else if v > grid[n - 1] {
        (n - 2, n - 1)
    } else {
        return interpolate(grid, values, v);
    };
    let slope = (values[b] - values[a]) / (grid[b] - grid[a]);
    Some(values[a] + slope * (v - grid[a]))
}

/// `grid_size` equally spaced points spanning `[lo, hi]`.
pub fn equispaced(lo: f64, hi: f64, grid_size: usize) -> Vec<f64> {
    if grid_size <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (grid_size - 1) as f64;
    (0..grid_size)
        .map(|i| if i + 1 == grid_size { hi } else { lo + step * i as f64 })
        .collect()
}

/// The pair `(q̂_0, q̂_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub q0: QCurve,
    pub q1: QCurve,
}

impl CurvePair {
    /// Curve imputing the missing potential outcome of a unit in group `d`.
    pub fn opposing(&self, d: bool) -> &QCurve {
        if d {
            &self.q0
        } else {
            &self.q1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateEstimate {
    pub x0: Vec<f64>,
    pub d0: u8,
    /// Own-group fitted mean at `x0`.
    pub own: f64,
    pub tau: Option<f64>,
    pub s: bool,
    pub ey1: Option<f64>,
    pub ey0: Option<f64>,
}

/// Imputes both conditional means at `x0`, a point in group `d0` whose
/// own-group fit is `own`.
pub fn cate_at(curves: &CurvePair, own: f64, x0: &[f64], d0: bool) -> CateEstimate {
    let curve = curves.opposing(d0);
    let imputed = if curve.contains(own) { curve.eval(own) } else { None };
    let (ey1, ey0) = if d0 { (Some(own), imputed) } else { (imputed, Some(own)) };
    let tau = match (ey1, ey0) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    CateEstimate {
        x0: x0.to_vec(),
        d0: d0 as u8,
        own,
        tau,
        s: imputed.is_some(),
        ey1,
        ey0,
    }
}

/// `g̃_d(x)`: local linear fit of group `d` (held by `smoother`) at `anchor`,
/// extended linearly to `x` along the fitted gradient.
pub fn extrapolate_from(
    ds: &Dataset,
    smoother: &GroupSmoother,
    anchor: &[f64],
    x: &[f64],
    kernel: Kernel,
    h: f64,
    multipliers: Option<&[f64]>,
) -> Result<f64> {
    let fit = smoother.fit(ds, anchor, kernel, h, multipliers, None)?;
    Ok(fit.value + step(&fit.gradient, anchor, x))
}

#[inline]
pub(crate) fn step(gradient: &[f64], anchor: &[f64], x: &[f64]) -> f64 {
    gradient
        .iter()
        .zip(x.iter().zip(anchor))
        .map(|(g, (a, b))| g * (a - b))
        .sum()
}

/// `g̃_d(x)` anchored at the nearest member of `smoother`'s group.
pub fn gtilde(
    ds: &Dataset,
    smoother: &GroupSmoother,
    x: &[f64],
    kernel: Kernel,
    h: f64,
    multipliers: Option<&[f64]>,
) -> Result<f64> {
    let (nn, _) = smoother.index().nearest(x).ok_or(Error::EmptyFrontierSample)?;
    extrapolate_from(ds, smoother, ds.x_row(nn), x, kernel, h, multipliers)
}

/// Second-stage regression sample: generated regressor, response, the
/// unit's row, and optional stratum covariates.
#[derive(Debug, Clone)]
pub struct SecondStage {
    g: Vec<f64>,
    response: Vec<f64>,
    rows: Vec<usize>,
    strata: Option<(usize, Vec<f64>)>,
    blocking: Option<Blocking>,
    order: Vec<usize>,
    sorted_g: Vec<f64>,
}

impl SecondStage {
    pub fn new(g: Vec<f64>, response: Vec<f64>, rows: Vec<usize>) -> Self {
        assert!(g.len() == response.len() && g.len() == rows.len());
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
        let sorted_g = order.iter().map(|&j| g[j]).collect();
        Self {
            g,
            response,
            rows,
            strata: None,
            blocking: None,
            order,
            sorted_g,
        }
    }

    /// Attaches stratum covariates, row-major with `width` columns.
    pub fn with_strata(mut self, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * self.g.len());
        self.strata = Some((width, values));
        self
    }

    /// Cross-validation leaves out, with each unit, every unit whose
    /// location (row-major, `width` columns, one or more per unit) lies
    /// within `radius` of one of the held-out unit's locations.
    pub fn with_blocking(mut self, width: usize, per_unit: usize, locations: Vec<f64>, radius: f64) -> Self {
        assert_eq!(locations.len(), width * per_unit * self.g.len());
        self.blocking = Some(Blocking {
            width,
            per_unit,
            locations,
            radius2: radius * radius,
        });
        self
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn regressor(&self) -> &[f64] {
        &self.g
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Local linear fit at `y0` (and stratum point `x2`, when strata are
    /// attached). Weights are `K(dist/b)` times the row multipliers, where
    /// dist is `|g − y0|` plus the Euclidean stratum distance.
    pub fn fit(
        &self,
        y0: f64,
        x2: Option<&[f64]>,
        b: f64,
        kernel: Kernel,
        multipliers: Option<&[f64]>,
        exclude: Option<usize>,
    ) -> Result<f64> {
        self.fit_skipping(y0, x2, b, kernel, multipliers, |j| Some(j) == exclude)
    }

    fn fit_skipping(
        &self,
        y0: f64,
        x2: Option<&[f64]>,
        b: f64,
        kernel: Kernel,
        multipliers: Option<&[f64]>,
        skip: impl Fn(usize) -> bool,
    ) -> Result<f64> {
        let reach = kernel.support_radius() * b;
        let lo = self.sorted_g.partition_point(|&g| g < y0 - reach);
        let hi = self.sorted_g.partition_point(|&g| g <= y0 + reach);
        let mut window: Vec<usize> = self.order[lo..hi].to_vec();
        window.sort_unstable();
        let width = self.strata.as_ref().map_or(0, |s| s.0);
        let mut acc = WlsAccumulator::new(1 + width);
        let mut z = vec![0.0; 1 + width];
        for j in window {
            if skip(j) {
                continue;
            }
            let dg = self.g[j] - y0;
            let mut dist = dg.abs();
            z[0] = dg;
            if let (Some((w, vals)), Some(x2)) = (&self.strata, x2) {
                let row = &vals[j * w..(j + 1) * w];
                let mut s2 = 0.0;
                for ((zz, v), c) in z[1..].iter_mut().zip(row).zip(x2) {
                    *zz = v - c;
                    s2 += (v - c) * (v - c);
                }
                dist += s2.sqrt();
            }
            let mut wt = kernel.weight(dist / b);
            if let Some(m) = multipliers {
                wt *= m[self.rows[j]];
            }
            acc.add(wt, &z, self.response[j]);
        }
        Ok(acc.solve()?.coef[0])
    }

    fn stratum_of(&self, j: usize) -> Option<&[f64]> {
        self.strata.as_ref().map(|(w, v)| &v[j * w..(j + 1) * w])
    }

    /// Mean leave-one-out squared error at bandwidth `b`; with blocking
    /// attached, each unit's neighborhood is left out along with it.
    pub fn loo_score(&self, b: f64, kernel: Kernel) -> Option<f64> {
        self.loo_score_scaled(b, kernel, 1.0)
    }

    /// [`SecondStage::loo_score`] with the blocking radius multiplied by
    /// `scale`; zero gives plain leave-one-out.
    fn loo_score_scaled(&self, b: f64, kernel: Kernel, scale: f64) -> Option<f64> {
        let blocking = self.blocking.as_ref().filter(|_| scale > 0.0);
        let r2 = scale * scale;
        let errors: Vec<Option<f64>> = (0..self.len())
            .into_par_iter()
            .map(|j| {
                let fit = match blocking {
                    None => self.fit(self.g[j], self.stratum_of(j), b, kernel, None, Some(j)),
                    Some(bl) => self.fit_skipping(self.g[j], self.stratum_of(j), b, kernel, None, |i| {
                        i == j || bl.close(i, j, r2)
                    }),
                };
                fit.ok().map(|f| (self.response[j] - f).powi(2))
            })
            .collect();
        mean_if_mostly_ok(&errors)
    }

    /// Default candidate bandwidths: 16 log-spaced values between 1/40 and
    /// 1/2 of the regressor range.
    pub fn default_grid(&self) -> Result<Vec<f64>> {
        let range = match (self.sorted_g.first(), self.sorted_g.last()) {
            (Some(a), Some(b)) => b - a,
            _ => return Err(Error::EmptyFrontierSample),
        };
        if !(range > 0.0) {
            return Err(Error::InvalidArgument(
                "generated regressor has no spread; pass b explicitly".into(),
            ));
        }
        Ok(log_grid(range / 40.0, range / 2.0, 16))
    }

    /// Leave-one-out cross-validated second-stage bandwidth.
    pub fn cv_bandwidth(&self, kernel: Kernel, grid: Option<&[f64]>) -> Result<f64> {
        let grid = match grid {
            Some(g) => check_grid(g)?,
            None => self.default_grid()?,
        };
        // Blocks can swallow whole neighborhoods in small samples; shrink
        // them until some candidate can be scored.
        let scales: &[f64] = if self.blocking.is_some() {
            &[1.0, 0.5, 0.0]
        } else {
            &[0.0]
        };
        for &scale in scales {
            let scores: Vec<Option<f64>> = grid.iter().map(|&b| self.loo_score_scaled(b, kernel, scale)).collect();
            if let Some(j) = argmin_prefer_last(&scores) {
                return Ok(grid[j]);
            }
        }
        Err(Error::AllCandidatesFailed)
    }

    /// Evaluates the fit on every grid point in parallel.
    pub fn fit_grid(
        &self,
        grid: &[f64],
        x2: Option<&[f64]>,
        b: f64,
        kernel: Kernel,
        multipliers: Option<&[f64]>,
    ) -> Vec<Option<f64>> {
        grid.par_iter()
            .map(|&y| self.fit(y, x2, b, kernel, multipliers, None).ok())
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Blocking {
    width: usize,
    per_unit: usize,
    locations: Vec<f64>,
    radius2: f64,
}

impl Blocking {
    fn points(&self, i: usize) -> impl Iterator<Item = &[f64]> {
        let stride = self.width * self.per_unit;
        self.locations[i * stride..(i + 1) * stride].chunks(self.width)
    }

    fn close(&self, i: usize, j: usize, scale2: f64) -> bool {
        let r2 = scale2 * self.radius2;
        self.points(i)
            .any(|a| self.points(j).any(|b| crate::spatial::dist2(a, b) <= r2))
    }
}

/// Splits grid evaluations into kept points and dropped locations, failing
/// when too many drop.
pub(crate) fn collect_grid(grid: &[f64], fitted: &[Option<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut kept = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for (&y, v) in grid.iter().zip(fitted) {
        match v {
            Some(v) => {
                kept.push(y);
                values.push(*v);
            }
            None => dropped.push(y),
        }
    }
    if kept.is_empty() || dropped.len() as f64 > MAX_DROPPED_SHARE * grid.len() as f64 {
        return Err(Error::TooManyDroppedPoints {
            dropped: dropped.len(),
            total: grid.len(),
        });
    }
    Ok((kept, values, dropped))
}
