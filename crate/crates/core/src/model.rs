//! End-to-end estimator: resolves bandwidths, builds the per-group indexes
//! and the near-frontier sample once, then serves q-curves, fits and CATEs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::extrapolate::{cate_at, collect_grid, equispaced, step, CateEstimate, CurvePair, QCurve, SecondStage};
use crate::frontier::{cross_nn_indexed, domain_endpoints, FrontierInfo};
use crate::isotonic::rearrange;
use crate::kernels::Kernel;
use crate::loclin::{argmin_prefer_last, check_grid, rule_of_thumb_h, BandwidthMode, GroupSmoother, LocalFit};

/// How the first-stage bandwidth is chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HChoice {
    /// 1.06·n_min^(−1/6) with n_min the smaller group size.
    #[default]
    RuleOfThumb,
    Fixed(f64),
    /// Leave-one-out CV pooled over both groups.
    CrossValidate(Vec<f64>),
}

/// Which units bound the estimated domain of `q̂_{1−d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointSource {
    /// Own-group fits `ĝ_d` at near-frontier units of group `d`.
    #[default]
    OwnGroup,
    /// Extrapolated fits `g̃_d` at the regression sample (group `1 − d`).
    RegressionSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kernel: Kernel,
    pub h: HChoice,
    /// Near-frontier radius; `None` uses ω·h.
    pub epsilon: Option<f64>,
    /// Second-stage bandwidth; `None` cross-validates.
    pub b: Option<f64>,
    pub grid_size: usize,
    pub rearrange: bool,
    /// Regress `ĝ_{1−d}(X_i)` instead of `Y_i` in the second stage.
    pub smooth_response: bool,
    pub endpoint_source: EndpointSource,
    pub standardize: bool,
    /// Cross-validate `b` leaving out, with each unit, all units whose
    /// first-stage fits share data with it (plain leave-one-out otherwise).
    pub blocked_cv: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Uniform,
            h: HChoice::RuleOfThumb,
            epsilon: None,
            b: None,
            grid_size: 100,
            rearrange: false,
            smooth_response: false,
            endpoint_source: EndpointSource::OwnGroup,
            standardize: true,
            blocked_cv: true,
        }
    }
}

/// Family of stratum-specific curves from the conditional estimator.
#[derive(Debug)]
pub struct ConditionalQ {
    pub strata_cols: Vec<usize>,
    /// One entry per requested stratum point (raw covariate units).
    pub curves: Vec<(Vec<f64>, Result<QCurve>)>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RddModel {
    raw: Dataset,
    work: Dataset,
    transform: Standardization,
    smoothers: [GroupSmoother; 2],
    frontier: FrontierInfo,
    config: ModelConfig,
    h: f64,
    epsilon: f64,
    h_mode: BandwidthMode,
}

fn group_idx(d: bool) -> usize {
    d as usize
}

impl RddModel {
    pub fn new(ds: Dataset, config: ModelConfig) -> Result<Self> {
        if config.grid_size == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        let (work, transform) = if config.standardize {
            ds.standardize()?
        } else {
            (ds.clone(), Standardization::identity(ds.k()))
        };
        let (treated, untreated) = work.partition();
        let n_min = treated.len().min(untreated.len());
        let smoothers = [GroupSmoother::new(&work, untreated), GroupSmoother::new(&work, treated)];
        let (h, h_mode) = match &config.h {
            HChoice::RuleOfThumb => (rule_of_thumb_h(n_min), BandwidthMode::RuleOfThumb),
            HChoice::Fixed(h) => {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
                }
                (*h, BandwidthMode::Manual)
            }
            HChoice::CrossValidate(grid) => {
                let grid = check_grid(grid)?;
                let scores: Vec<Option<f64>> = grid
                    .iter()
                    .map(|&h| {
                        let s0 = smoothers[0].loo_score(&work, config.kernel, h)?;
                        let s1 = smoothers[1].loo_score(&work, config.kernel, h)?;
                        Some(0.5 * (s0 + s1))
                    })
                    .collect();
                let j = argmin_prefer_last(&scores).ok_or(Error::AllCandidatesFailed)?;
                (grid[j], BandwidthMode::CrossValidated)
            }
        };
        let epsilon = config.epsilon.unwrap_or(config.kernel.omega() * h);
        if let Some(b) = config.b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("b must be positive, got {b}")));
            }
        }
        let frontier = cross_nn_indexed(&work, smoothers[1].index(), smoothers[0].index()).set_weights(epsilon)?;
        Ok(Self {
            raw: ds,
            work,
            transform,
            smoothers,
            frontier,
            config,
            h,
            epsilon,
            h_mode,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.raw
    }

    /// Sample in the coordinates used for distances.
    pub fn working(&self) -> &Dataset {
        &self.work
    }

    pub fn transform(&self) -> &Standardization {
        &self.transform
    }

    pub fn frontier(&self) -> &FrontierInfo {
        &self.frontier
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kernel(&self) -> Kernel {
        self.config.kernel
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h_mode(&self) -> BandwidthMode {
        self.h_mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.raw.n()
    }

    pub fn smoother(&self, group: bool) -> &GroupSmoother {
        &self.smoothers[group_idx(group)]
    }

    pub fn to_working(&self, x_raw: &[f64]) -> Vec<f64> {
        self.transform.apply(x_raw)
    }

    fn check_multipliers(&self, m: Option<&[f64]>) -> Result<()> {
        match m {
            Some(m) if m.len() != self.n() => Err(Error::InvalidArgument(format!(
                "expected {} multipliers, got {}",
                self.n(),
                m.len()
            ))),
            Some(m) if m.iter().any(|v| !(*v >= 0.0)) => {
                Err(Error::InvalidArgument("multipliers must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    /// `ĝ_group` at a point given in working coordinates.
    pub fn fit_working(&self, group: bool, x: &[f64], multipliers: Option<&[f64]>) -> Result<LocalFit> {
        self.smoother(group)
            .fit(&self.work, x, self.kernel(), self.h, multipliers, None)
    }

    /// `ĝ_group` at a point given in raw covariate units.
    pub fn fit_point(&self, group: bool, x_raw: &[f64], multipliers: Option<&[f64]>) -> Result<LocalFit> {
        self.fit_working(group, &self.to_working(x_raw), multipliers)
    }

    /// Own-group fit at unit `i`.
    pub fn own_fit(&self, i: usize, multipliers: Option<&[f64]>) -> Result<LocalFit> {
        self.fit_working(self.work.d()[i], self.work.x_row(i), multipliers)
    }

    /// Own-group fitted value for every unit; `None` where the fit failed.
    pub fn own_fits(&self, multipliers: Option<&[f64]>) -> Vec<Option<f64>> {
        (0..self.n())
            .into_par_iter()
            .map(|i| self.own_fit(i, multipliers).ok().map(|f| f.value))
            .collect()
    }

    /// `g̃` for unit `i`: the opposite group's fit at `i`'s cross-group
    /// nearest neighbor, extended to `X_i`.
    pub fn gtilde_unit(&self, i: usize, multipliers: Option<&[f64]>) -> Result<f64> {
        let group = !self.work.d()[i];
        let nn = self.frontier.nn_index[i];
        let fit = self.fit_working(group, self.work.x_row(nn), multipliers)?;
        Ok(fit.value + step(&fit.gradient, self.work.x_row(nn), self.work.x_row(i)))
    }

    /// `g̃_d` at every near-frontier unit of group `1 − d`, sharing one fit
    /// per distinct anchor. Returns the values and the count of failures.
    fn extrapolated_sample(&self, d: bool, multipliers: Option<&[f64]>) -> (Vec<(usize, f64)>, usize) {
        let units = self.frontier.near_units(!d);
        let anchors: Vec<usize> = {
            let mut a: Vec<usize> = units.iter().map(|&i| self.frontier.nn_index[i]).collect();
            a.sort_unstable();
            a.dedup();
            a
        };
        let fits: BTreeMap<usize, Option<LocalFit>> = anchors
            .par_iter()
            .map(|&j| (j, self.fit_working(d, self.work.x_row(j), multipliers).ok()))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let mut out = Vec::with_capacity(units.len());
        let mut failed = 0;
        for i in units {
            let nn = self.frontier.nn_index[i];
            match &fits[&nn] {
                Some(fit) => out.push((
                    i,
                    fit.value + step(&fit.gradient, self.work.x_row(nn), self.work.x_row(i)),
                )),
                None => failed += 1,
            }
        }
        (out, failed)
    }

    /// Regression sample for `q̂_{1−d}` and the count of dropped units.
    pub fn second_stage(&self, d: bool, multipliers: Option<&[f64]>) -> Result<(SecondStage, usize)> {
        self.check_multipliers(multipliers)?;
        let (sample, mut failed) = self.extrapolated_sample(d, multipliers);
        let mut g = Vec::with_capacity(sample.len());
        let mut resp = Vec::with_capacity(sample.len());
        let mut rows = Vec::with_capacity(sample.len());
        let smoothed: Vec<Option<f64>> = if self.config.smooth_response {
            sample
                .par_iter()
                .map(|&(i, _)| self.own_fit(i, multipliers).ok().map(|f| f.value))
                .collect()
        } else {
            sample.iter().map(|&(i, _)| Some(self.work.y()[i])).collect()
        };
        for (&(i, gi), r) in sample.iter().zip(smoothed) {
            match r {
                Some(r) => {
                    g.push(gi);
                    resp.push(r);
                    rows.push(i);
                }
                None => failed += 1,
            }
        }
        if g.is_empty() {
            return Err(Error::EmptyFrontierSample);
        }
        let mut stage = SecondStage::new(g, resp, rows);
        if self.config.blocked_cv {
            // fits at points more than 2h apart use disjoint data
            let mut locations = Vec::with_capacity(2 * stage.len() * self.work.k());
            for &i in stage.rows() {
                locations.extend_from_slice(self.work.x_row(i));
                locations.extend_from_slice(self.work.x_row(self.frontier.nn_index[i]));
            }
            stage = stage.with_blocking(self.work.k(), 2, locations, 2.0 * self.h);
        }
        Ok((stage, failed))
    }

    /// Estimated domain `[ŷ_low, ŷ_high]` of `q̂_{1−d}`.
    pub fn endpoints(&self, d: bool, stage: &SecondStage, multipliers: Option<&[f64]>) -> Result<(f64, f64)> {
        match self.config.endpoint_source {
            EndpointSource::RegressionSample => domain_endpoints(stage.regressor()),
            EndpointSource::OwnGroup => {
                let values: Vec<f64> = self
                    .frontier
                    .near_units(d)
                    .par_iter()
                    .filter_map(|&i| self.own_fit(i, multipliers).ok().map(|f| f.value))
                    .collect();
                domain_endpoints(&values)
            }
        }
    }

    /// Second-stage bandwidth: configured, or cross-validated on `stage`.
    pub fn resolve_b(&self, stage: &SecondStage) -> Result<f64> {
        match self.config.b {
            Some(b) => Ok(b),
            None => stage.cv_bandwidth(self.kernel(), None),
        }
    }

    /// `q̂_{1−d}` over `grid_size` points of its estimated domain.
    pub fn estimate_q(&self, d: bool) -> Result<QCurve> {
        self.estimate_q_with(d, None)
    }

    pub fn estimate_q_with(&self, d: bool, multipliers: Option<&[f64]>) -> Result<QCurve> {
        let (stage, failed) = self.second_stage(d, multipliers)?;
        let (y_low, y_high) = self.endpoints(d, &stage, multipliers)?;
        let b = self.resolve_b(&stage)?;
        let grid = equispaced(y_low, y_high, self.config.grid_size);
        let fitted = stage.fit_grid(&grid, None, b, self.kernel(), multipliers);
        let (grid, mut values, dropped) = collect_grid(&grid, &fitted)?;
        if self.config.rearrange {
            values = rearrange(&values);
        }
        Ok(QCurve {
            grid,
            values,
            y_low,
            y_high,
            target: (!d) as u8,
            bands: None,
            dropped,
            b,
            n_sample: stage.len(),
            n_failed_units: failed,
            rearranged: self.config.rearrange,
        })
    }

    /// Re-evaluates `q̂_{1−d}` at fixed `grid` and `b` under `multipliers`
    /// (one bootstrap draw). Failed points come back as `None`.
    pub fn q_on_grid(&self, d: bool, grid: &[f64], b: f64, multipliers: Option<&[f64]>) -> Result<Vec<Option<f64>>> {
        let (stage, _) = self.second_stage(d, multipliers)?;
        let mut fitted = stage.fit_grid(grid, None, b, self.kernel(), multipliers);
        if self.config.rearrange {
            let kept: Vec<f64> = fitted.iter().flatten().copied().collect();
            let mut sorted = rearrange(&kept).into_iter();
            for v in fitted.iter_mut().flatten() {
                *v = sorted.next().expect("same length");
            }
        }
        Ok(fitted)
    }

    /// Both transfer curves: `q0` from direction 1, `q1` from direction 0.
    pub fn estimate_pair(&self) -> Result<CurvePair> {
        Ok(CurvePair {
            q0: self.estimate_q(true)?,
            q1: self.estimate_q(false)?,
        })
    }

    /// CATE at a raw-unit point known to lie in group `d0`.
    pub fn cate(&self, curves: &CurvePair, x_raw: &[f64], d0: bool) -> Result<CateEstimate> {
        let own = self.fit_point(d0, x_raw, None)?.value;
        Ok(cate_at(curves, own, x_raw, d0))
    }

    /// Group of the sample unit nearest to a raw-unit point; a stand-in for
    /// the treatment rule when it is unknown.
    pub fn nearest_group(&self, x_raw: &[f64]) -> bool {
        let x = self.to_working(x_raw);
        let t = self.smoothers[1].index().nearest(&x).map(|p| p.1);
        let u = self.smoothers[0].index().nearest(&x).map(|p| p.1);
        match (t, u) {
            (Some(t), Some(u)) => t <= u,
            (Some(_), None) => true,
            _ => false,
        }
    }

    /// Stratum-specific `q̂_{1−d}(y, x²)` where `x²` collects the columns
    /// `strata_cols`; `points` are stratum values in raw units.
    pub fn estimate_q_conditional(
        &self,
        d: bool,
        strata_cols: &[usize],
        points: &[Vec<f64>],
        multipliers: Option<&[f64]>,
    ) -> Result<ConditionalQ> {
        let k = self.work.k();
        let mut cols = strata_cols.to_vec();
        cols.sort_unstable();
        cols.dedup();
        if cols.is_empty() || cols.len() >= k || cols.iter().any(|&c| c >= k) {
            return Err(Error::InvalidArgument(format!(
                "strata columns must be a proper nonempty subset of the {k} covariates"
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != cols.len()) {
            return Err(Error::InvalidArgument(format!(
                "stratum point {p:?} must have {} coordinates",
                cols.len()
            )));
        }
        let warning = (k - cols.len() < 2).then(|| {
            format!(
                "only {} covariate(s) outside the strata; at least 2 are recommended",
                k - cols.len()
            )
        });
        let (stage, failed) = self.second_stage(d, multipliers)?;
        let (y_low, y_high) = self.endpoints(d, &stage, multipliers)?;
        let strata: Vec<f64> = stage
            .rows()
            .iter()
            .flat_map(|&i| cols.iter().map(move |&c| self.work.x_row(i)[c]))
            .collect();
        let stage = stage.with_strata(cols.len(), strata);
        let b = self.resolve_b(&stage)?;
        let grid = equispaced(y_low, y_high, self.config.grid_size);
        let curves = points
            .iter()
            .map(|p| {
                let z: Vec<f64> = cols
                    .iter()
                    .zip(p)
                    .map(|(&c, v)| (v - self.transform.means[c]) / self.transform.scales[c])
                    .collect();
                let fitted = stage.fit_grid(&grid, Some(&z), b, self.kernel(), multipliers);
                let curve = collect_grid(&grid, &fitted).map(|(g, mut values, dropped)| {
                    if self.config.rearrange {
                        values = rearrange(&values);
                    }
                    QCurve {
                        grid: g,
                        values,
                        y_low,
                        y_high,
                        target: (!d) as u8,
                        bands: None,
                        dropped,
                        b,
                        n_sample: stage.len(),
                        n_failed_units: failed,
                        rearranged: self.config.rearrange,
                    }
                });
                (p.clone(), curve)
            })
            .collect();
        Ok(ConditionalQ {
            strata_cols: cols,
            curves,
            warning,
        })
    }
}
