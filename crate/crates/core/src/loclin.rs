//! Multivariate local linear regression within one treatment group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::spatial::SpatialIndex;
use crate::wls::WlsAccumulator;

/// Fitted conditional mean and slope at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub effective_n: usize,
    pub x0: Vec<f64>,
    /// The normal equations needed the ridge floor.
    pub regularized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    Manual,
    #[default]
    RuleOfThumb,
    CrossValidated,
}

/// Resolved smoothing parameters: first-stage `h` (covariate units),
/// second-stage `b` (outcome units) and the near-frontier radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    pub h: f64,
    pub b: f64,
    pub epsilon: f64,
    pub mode: BandwidthMode,
}

impl BandwidthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("b", self.b), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// h = 1.06·n^(−1/6): the MSE-rate bandwidth for two covariates.
pub fn rule_of_thumb_h(n_group: usize) -> f64 {
    1.06 * (n_group.max(1) as f64).powf(-1.0 / 6.0)
}

/// `steps` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..steps)
                .map(|i| (a + (b - a) * i as f64 / (steps - 1) as f64).exp())
                .collect()
        }
    }
}

/// Spatial index over one group's covariate rows.
///
/// The smoother keeps row ids only; every call takes the dataset it was
/// built from.
#[derive(Debug, Clone)]
pub struct GroupSmoother {
    members: Vec<usize>,
    index: SpatialIndex,
}

impl GroupSmoother {
    pub fn new(ds: &Dataset, members: Vec<usize>) -> Self {
        let index = SpatialIndex::build(ds.x(), ds.k(), &members);
        Self { members, index }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    /// Local linear fit at `x0`. `multipliers`, when given, rescales row
    /// `i`'s kernel weight by `multipliers[i]`; `exclude` drops one row
    /// (leave-one-out).
    pub fn fit(
        &self,
        ds: &Dataset,
        x0: &[f64],
        kernel: Kernel,
        h: f64,
        multipliers: Option<&[f64]>,
        exclude: Option<usize>,
    ) -> Result<LocalFit> {
        let k = ds.k();
        let mut acc = WlsAccumulator::new(k);
        let mut z = vec![0.0; k];
        for (i, d2) in self.index.within(x0, kernel.support_radius() * h) {
            if Some(i) == exclude {
                continue;
            }
            let mut w = kernel.weight(d2.sqrt() / h);
            if let Some(m) = multipliers {
                w *= m[i];
            }
            for ((zj, xj), x0j) in z.iter_mut().zip(ds.x_row(i)).zip(x0) {
                *zj = xj - x0j;
            }
            acc.add(w, &z, ds.y()[i]);
        }
        let sol = acc.solve()?;
        Ok(LocalFit {
            value: sol.coef[0],
            gradient: sol.coef[1..].to_vec(),
            effective_n: sol.effective_n,
            x0: x0.to_vec(),
            regularized: sol.regularized,
        })
    }

    /// Mean leave-one-out squared error over the group, or `None` when more
    /// than 5% of the points cannot be fitted.
    pub fn loo_score(&self, ds: &Dataset, kernel: Kernel, h: f64) -> Option<f64> {
        let errors: Vec<Option<f64>> = self
            .members
            .par_iter()
            .map(|&i| {
                self.fit(ds, ds.x_row(i), kernel, h, None, Some(i))
                    .ok()
                    .map(|f| (ds.y()[i] - f.value).powi(2))
            })
            .collect();
        mean_if_mostly_ok(&errors)
    }
}

pub(crate) fn mean_if_mostly_ok(errors: &[Option<f64>]) -> Option<f64> {
    let failed = errors.iter().filter(|e| e.is_none()).count();
    if errors.is_empty() || failed as f64 > 0.05 * errors.len() as f64 {
        return None;
    }
    let ok: Vec<f64> = errors.iter().flatten().copied().collect();
    Some(ok.iter().sum::<f64>() / ok.len() as f64)
}

/// Index of the best score; near-ties go to the later (larger) candidate.
pub(crate) fn argmin_prefer_last(scores: &[Option<f64>]) -> Option<usize> {
    let min = scores.iter().flatten().copied().min_by(f64::total_cmp)?;
    let tol = 1e-12 * (1.0 + min.abs());
    scores
        .iter()
        .enumerate()
        .rev()
        .find_map(|(j, s)| s.filter(|v| *v - min <= tol).map(|_| j))
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth candidates must be positive, got {bad}"
        )));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Fits a local linear regression at `x0` over rows `group` of `ds`.
pub fn fit_at(
    ds: &Dataset,
    group: &[usize],
    x0: &[f64],
    kernel: Kernel,
    h: f64,
    multipliers: Option<&[f64]>,
) -> Result<LocalFit> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    GroupSmoother::new(ds, group.to_vec()).fit(ds, x0, kernel, h, multipliers, None)
}

/// Leave-one-out cross-validated first-stage bandwidth from `grid`.
pub fn cv_bandwidth(ds: &Dataset, group: &[usize], kernel: Kernel, grid: &[f64]) -> Result<f64> {
    let grid = check_grid(grid)?;
    let smoother = GroupSmoother::new(ds, group.to_vec());
    let scores: Vec<Option<f64>> = grid.iter().map(|&h| smoother.loo_score(ds, kernel, h)).collect();
    argmin_prefer_last(&scores)
        .map(|j| grid[j])
        .ok_or(Error::AllCandidatesFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scattered(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            y.push(f(&p));
            x.extend_from_slice(&p);
        }
        let d = (0..n).map(|i| i % 2 == 0).collect();
        Dataset::new(y, d, x, vec!["x1".into(), "x2".into()]).unwrap()
    }

    #[test]
    fn reproduces_affine_map() {
        let ds = scattered(50, 1, |p| 1.0 + 2.0 * p[0] - p[1]);
        let all: Vec<usize> = (0..50).collect();
        for k in Kernel::ALL {
            let fit = fit_at(&ds, &all, &[0.4, 0.6], k, 0.5, None).unwrap();
            assert!((fit.value - (1.0 + 0.8 - 0.6)).abs() < 1e-9, "{k}");
            assert!((fit.gradient[0] - 2.0).abs() < 1e-9);
            assert!((fit.gradient[1] + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wide_uniform_window_is_global_ols() {
        let ds = scattered(40, 2, |p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let all: Vec<usize> = (0..40).collect();
        let a = fit_at(&ds, &all, &[0.2, 0.2], Kernel::Uniform, 10.0, None).unwrap();
        let b = fit_at(&ds, &all, &[0.9, 0.1], Kernel::Uniform, 10.0, None).unwrap();
        // same global plane evaluated at two points
        let plane_b = a.value + a.gradient[0] * 0.7 + a.gradient[1] * -0.1;
        assert!((plane_b - b.value).abs() < 1e-10);
        assert_eq!(a.effective_n, 40);
    }

    #[test]
    fn insufficient_support_is_reported() {
        let ds = scattered(30, 3, |p| p[0]);
        let all: Vec<usize> = (0..30).collect();
        let err = fit_at(&ds, &all, &[5.0, 5.0], Kernel::Uniform, 0.1, None).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSupport {
                effective_n: 0,
                required: 3
            }
        ));
    }

    #[test]
    fn constant_multipliers_are_neutral() {
        let ds = scattered(200, 4, |p| (2.0 * p[0]).cos() * p[1]);
        let all: Vec<usize> = (0..200).collect();
        let base = fit_at(&ds, &all, &[0.5, 0.5], Kernel::Triangular, 0.3, None).unwrap();
        let m = vec![3.7; 200];
        let scaled = fit_at(&ds, &all, &[0.5, 0.5], Kernel::Triangular, 0.3, Some(&m)).unwrap();
        assert!((base.value - scaled.value).abs() < 1e-10);
        for j in 0..2 {
            assert!((base.gradient[j] - scaled.gradient[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn rule_of_thumb_rate() {
        assert!((rule_of_thumb_h(1) - 1.06).abs() < 1e-15);
        assert!((rule_of_thumb_h(64) - 1.06 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        let ds = scattered(30, 5, |p| p[0]);
        let all: Vec<usize> = (0..30).collect();
        assert!(matches!(
            cv_bandwidth(&ds, &all, Kernel::Uniform, &[-1.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            cv_bandwidth(&ds, &all, Kernel::Uniform, &[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn noiseless_affine_cv_prefers_largest() {
        let ds = scattered(120, 6, |p| 0.5 - p[0] + 3.0 * p[1]);
        let all: Vec<usize> = (0..120).collect();
        let h = cv_bandwidth(&ds, &all, Kernel::Uniform, &[0.3, 0.6, 2.0]).unwrap();
        assert_eq!(h, 2.0);
    }

    #[test]
    fn all_candidates_failing() {
        let ds = scattered(60, 7, |p| p[0]);
        let all: Vec<usize> = (0..60).collect();
        assert!(matches!(
            cv_bandwidth(&ds, &all, Kernel::Uniform, &[1e-4, 1e-3]),
            Err(Error::AllCandidatesFailed)
        ));
    }

    #[test]
    fn prefer_last_on_ties() {
        assert_eq!(argmin_prefer_last(&[Some(1.0), Some(0.5), Some(0.5)]), Some(2));
        assert_eq!(argmin_prefer_last(&[Some(0.2), Some(0.5), None]), Some(0));
        assert_eq!(argmin_prefer_last(&[None, None]), None);
        assert_eq!(argmin_prefer_last(&[Some(1e-30), Some(3e-30), Some(2e-30)]), Some(2));
        assert_eq!(argmin_prefer_last(&[Some(0.3), Some(0.1), Some(0.2)]), Some(1));
    }
}
