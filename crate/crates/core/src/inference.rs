//! Multiplier-bootstrap bands and the pairwise comonotonicity diagnostic.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolate::{interpolate_extended, step, Bands, CurvePair, QCurve};
use crate::model::RddModel;
use crate::policy::{effect_with, PolicyRule};
use crate::rng::substream;
use crate::spatial::dist2;

/// Bootstrap aborts when more than this share of draws is discarded.
pub const MAX_DISCARDED_SHARE: f64 = 0.25;
/// A draw is discarded when it fails on more than this share of points.
pub const MAX_FAILED_POINTS_SHARE: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            draws: 100,
            level: 0.90,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 draws, got {}",
                self.draws
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Unit-mean exponential weights, one per observation, for one draw.
pub fn exponential_multipliers(seed: u64, draw: u64, n: usize) -> Vec<f64> {
    let mut rng = substream(seed, draw);
    (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

/// `ceil(level·m)`-th smallest value (1-based) of `values`.
pub fn upper_quantile(values: &mut [f64], level: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let r = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[r - 1])
}

/// Pointwise bands around `base`. `estimator` maps an n-vector of
/// multipliers to re-estimates at the same points as `base`, `None` where a
/// point fails. Draws run in parallel and are merged in draw order.
pub fn bootstrap_bands<F>(n: usize, base: &[f64], cfg: &BootstrapConfig, estimator: F) -> Result<Bands>
where
    F: Fn(&[f64]) -> Result<Vec<Option<f64>>> + Sync,
{
    cfg.validate()?;
    let draws: Vec<Option<Vec<Option<f64>>>> = (0..cfg.draws as u64)
        .into_par_iter()
        .map(|s| {
            let m = exponential_multipliers(cfg.seed, s, n);
            let est = estimator(&m).ok()?;
            if est.len() != base.len() {
                return None;
            }
            let failed = est.iter().filter(|v| v.is_none()).count();
            (failed as f64 <= MAX_FAILED_POINTS_SHARE * base.len() as f64).then_some(est)
        })
        .collect();
    let discarded = draws.iter().filter(|d| d.is_none()).count();
    if discarded as f64 > MAX_DISCARDED_SHARE * cfg.draws as f64 {
        return Err(Error::TooManyDiscardedDraws {
            discarded,
            draws: cfg.draws,
        });
    }
    let used: Vec<&Vec<Option<f64>>> = draws.iter().flatten().collect();
    let mut lower = Vec::with_capacity(base.len());
    let mut upper = Vec::with_capacity(base.len());
    let mut dev = Vec::with_capacity(used.len());
    for (j, &q) in base.iter().enumerate() {
        dev.clear();
        dev.extend(used.iter().filter_map(|d| d[j]).map(|v| (v - q).abs()));
        let half = upper_quantile(&mut dev, cfg.level).unwrap_or(f64::INFINITY);
        lower.push(q - half);
        upper.push(q + half);
    }
    Ok(Bands {
        lower,
        upper,
        level: cfg.level,
        draws_used: used.len(),
        draws_discarded: discarded,
    })
}

/// Bands for `q̂_{1−d}` at the curve's own grid and bandwidth.
pub fn bootstrap_q(model: &RddModel, d: bool, curve: &QCurve, cfg: &BootstrapConfig) -> Result<Bands> {
    bootstrap_bands(model.n(), &curve.values, cfg, |m| {
        model.q_on_grid(d, &curve.grid, curve.b, Some(m))
    })
}

/// Bands for the policy effects of `rules`, holding the identified set `s`
/// fixed at its full-sample value. Within a draw, perturbed curves are
/// extended linearly past their end points so that every identified unit
/// keeps an imputation.
pub fn bootstrap_policy(
    model: &RddModel,
    curves: &CurvePair,
    s: &[bool],
    rules: &[PolicyRule],
    base: &[f64],
    cfg: &BootstrapConfig,
) -> Result<Bands> {
    let ds = model.dataset();
    bootstrap_bands(model.n(), base, cfg, |m| {
        let redraw = |d: bool, curve: &QCurve| -> Result<(Vec<f64>, Vec<f64>)> {
            let fitted = model.q_on_grid(d, &curve.grid, curve.b, Some(m))?;
            let failed = fitted.iter().filter(|v| v.is_none()).count();
            if failed as f64 > MAX_FAILED_POINTS_SHARE * fitted.len() as f64 {
                return Err(Error::TooManyDroppedPoints {
                    dropped: failed,
                    total: fitted.len(),
                });
            }
            Ok(curve
                .grid
                .iter()
                .zip(&fitted)
                .filter_map(|(&g, v)| v.map(|v| (g, v)))
                .unzip())
        };
        let q0 = redraw(true, &curves.q0)?;
        let q1 = redraw(false, &curves.q1)?;
        let fits = model.own_fits(Some(m));
        Ok(rules
            .iter()
            .map(|rule| {
                effect_with(ds, rule, s, |i| {
                    let (grid, values) = if ds.d()[i] { &q0 } else { &q1 };
                    interpolate_extended(grid, values, fits[i]?)
                })
                .ok()
                .map(|e| e.theta)
            })
            .collect())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComonoDiagnostic {
    /// Minimum over pairs of `(g1_a − g1_b)(g0_a − g0_b)`.
    pub statistic: f64,
    /// Indices of the first pair attaining the minimum.
    pub pair: (usize, usize),
    pub n_pairs: usize,
}

impl ComonoDiagnostic {
    pub fn is_violation(&self) -> bool {
        self.statistic < 0.0
    }
}

/// Brute-force minimum pairwise product over `(g1, g0)` evaluations.
pub fn comono_diagnostic(points: &[(f64, f64)]) -> Result<ComonoDiagnostic> {
    let m = points.len();
    if m < 2 {
        return Err(Error::TooFewPoints { got: m, required: 2 });
    }
    let rows: Vec<(f64, usize)> = (0..m - 1)
        .into_par_iter()
        .map(|a| {
            let (g1, g0) = points[a];
            let mut best = (f64::INFINITY, a + 1);
            for (b, &(h1, h0)) in points.iter().enumerate().skip(a + 1) {
                let p = (g1 - h1) * (g0 - h0);
                if p < best.0 {
                    best = (p, b);
                }
            }
            best
        })
        .collect();
    let mut out = (f64::INFINITY, (0, 1));
    for (a, &(p, b)) in rows.iter().enumerate() {
        if p < out.0 {
            out = (p, (a, b));
        }
    }
    Ok(ComonoDiagnostic {
        statistic: out.0,
        pair: out.1,
        n_pairs: m * (m - 1) / 2,
    })
}

/// Fitted pair at one near-frontier unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPair {
    pub row: usize,
    pub g1: f64,
    pub g0: f64,
    /// Smaller effective sample size of the two fits.
    pub support: usize,
}

/// Which near-frontier units enter the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    /// Minimum distance between kept units in working coordinates, as a
    /// multiple of the first-stage bandwidth.
    pub spacing: f64,
    /// Units whose support falls below this share of the median support
    /// are left out.
    pub support_share: f64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            spacing: 4.0,
            support_share: 0.5,
        }
    }
}

/// `(ĝ_1, ĝ_0)` at every near-frontier unit: the own-group fit and the
/// extrapolated opposite-group fit at the unit, in row order.
pub fn frontier_pairs(model: &RddModel) -> Vec<FrontierPair> {
    let work = model.working();
    let near: Vec<usize> = (0..work.n()).filter(|&i| model.frontier().w[i]).collect();
    let pairs: Vec<Option<FrontierPair>> = near
        .par_iter()
        .map(|&i| {
            let d = work.d()[i];
            let own = model.own_fit(i, None).ok()?;
            let anchor = work.x_row(model.frontier().nn_index[i]);
            let cross = model.fit_working(!d, anchor, None).ok()?;
            let extended = cross.value + step(&cross.gradient, anchor, work.x_row(i));
            let (g1, g0) = if d {
                (own.value, extended)
            } else {
                (extended, own.value)
            };
            Some(FrontierPair {
                row: i,
                g1,
                g0,
                support: own.effective_n.min(cross.effective_n),
            })
        })
        .collect();
    pairs.into_iter().flatten().collect()
}

/// Well-supported, well-separated subset of `pairs`. Nearby units have
/// differences dominated by estimation noise and thinly supported units
/// have unstable fits; either would decide a minimum.
pub fn select_pairs(model: &RddModel, pairs: &[FrontierPair], cfg: &DiagnosticConfig) -> Result<Vec<FrontierPair>> {
    if !(cfg.spacing >= 0.0 && (0.0..=1.0).contains(&cfg.support_share)) {
        return Err(Error::InvalidArgument(format!("invalid diagnostic settings {cfg:?}")));
    }
    let mut support: Vec<usize> = pairs.iter().map(|p| p.support).collect();
    support.sort_unstable();
    let floor = match support.len() {
        0 => 0.0,
        m => cfg.support_share * support[m / 2] as f64,
    };
    let work = model.working();
    let s2 = (cfg.spacing * model.h()).powi(2);
    let mut chosen: Vec<FrontierPair> = Vec::new();
    for p in pairs.iter().filter(|p| p.support as f64 >= floor) {
        let x = work.x_row(p.row);
        if chosen.iter().all(|c| dist2(x, work.x_row(c.row)) >= s2) {
            chosen.push(*p);
        }
    }
    Ok(chosen)
}

/// Diagnostic on the selected frontier pairs; the reported pair holds
/// dataset rows.
pub fn diagnose(model: &RddModel, cfg: &DiagnosticConfig) -> Result<ComonoDiagnostic> {
    let pairs = select_pairs(model, &frontier_pairs(model), cfg)?;
    let pts: Vec<(f64, f64)> = pairs.iter().map(|p| (p.g1, p.g0)).collect();
    let mut out = comono_diagnostic(&pts)?;
    out.pair = (pairs[out.pair.0].row, pairs[out.pair.1].row);
    Ok(out)
}
