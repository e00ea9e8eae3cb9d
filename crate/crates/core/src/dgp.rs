//! Synthetic sharp designs with closed-form conditional means.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Treat iff `weights · x ≤ cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    pub weights: Vec<f64>,
    pub cutoff: f64,
}

impl LinearRule {
    pub fn treats(&self, x: &[f64]) -> bool {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() <= self.cutoff
    }
}

/// Affine outcome maps `g_d(ξ, η) = a_d + b_d·ξ + η` of latent math skill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillEffect {
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillModelParams {
    pub mu_r: f64,
    pub mu_m: f64,
    pub sigma_r2: f64,
    pub sigma_m2: f64,
    pub sigma_rm: f64,
    pub omega_r2: f64,
    pub omega_m2: f64,
    pub effect: SkillEffect,
    pub eta_sd: f64,
}

impl Default for SkillModelParams {
    fn default() -> Self {
        Self {
            mu_r: 0.0,
            mu_m: 0.0,
            sigma_r2: 1.0,
            sigma_m2: 1.0,
            sigma_rm: 0.5,
            omega_r2: 0.3,
            omega_m2: 0.3,
            effect: SkillEffect {
                a0: 0.0,
                b0: 1.0,
                a1: 0.3,
                b1: 0.8,
            },
            eta_sd: 0.1,
        }
    }
}

impl SkillModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCovariance(m.into()));
        if !(self.sigma_r2 > 0.0 && self.sigma_m2 > 0.0) {
            return bad("skill variances must be positive");
        }
        if !(self.sigma_r2 * self.sigma_m2 - self.sigma_rm * self.sigma_rm > 0.0) {
            return bad("skill covariance matrix is not positive definite");
        }
        if !(self.omega_r2 > 0.0 && self.omega_m2 > 0.0) {
            return bad("measurement noise variances must be positive");
        }
        if !(self.effect.b0 > 0.0 && self.effect.b1 > 0.0) {
            return Err(Error::InvalidArgument(
                "outcome maps must be strictly increasing".into(),
            ));
        }
        if !(self.eta_sd >= 0.0) {
            return Err(Error::InvalidArgument("eta_sd must be nonnegative".into()));
        }
        Ok(())
    }

    fn score_det(&self) -> f64 {
        (self.sigma_r2 + self.omega_r2) * (self.sigma_m2 + self.omega_m2) - self.sigma_rm * self.sigma_rm
    }

    /// Coefficients `(c_r, c_m)` of `E[ξ_m | X] − μ_m` on the centered scores.
    pub fn posterior_coefficients(&self) -> (f64, f64) {
        let det = self.score_det();
        let c_r = self.sigma_rm * self.omega_m2 / det;
        let c_m = (self.sigma_m2 * (self.sigma_r2 + self.omega_r2) - self.sigma_rm * self.sigma_rm) / det;
        (c_r, c_m)
    }

    /// Weight γ of the reading score in the index `X_m + γ·X_r`.
    pub fn gamma(&self) -> f64 {
        self.sigma_rm * self.omega_m2
            / (self.sigma_m2 * self.omega_r2 + self.sigma_m2 * self.sigma_r2 - self.sigma_rm * self.sigma_rm)
    }

    /// Covariance of the observed scores `(X_r, X_m)`.
    pub fn score_covariance(&self) -> [[f64; 2]; 2] {
        [
            [self.sigma_r2 + self.omega_r2, self.sigma_rm],
            [self.sigma_rm, self.sigma_m2 + self.omega_m2],
        ]
    }

    fn posterior_mean(&self, x: &[f64]) -> f64 {
        let (c_r, c_m) = self.posterior_coefficients();
        self.mu_m + c_r * (x[0] - self.mu_r) + c_m * (x[1] - self.mu_m)
    }
}

/// Closed-form description of a generated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dgp", rename_all = "kebab-case")]
pub enum TruthSpec {
    /// Uniform square, treated iff `0.4x1 + x2 ≤ 0.7`, means in `t = x1 + x2`:
    /// `m1 = 0.5 + 0.6t`, `m0 = 0.2 + 0.5t + 0.25t²`.
    Expository,
    /// Uniform square, treated iff `x1 ≤ 0.5`, `E[Y(1)|x] = x1 + x2`,
    /// `E[Y(0)|x] = c(x1 + x2) + a0`.
    Linear { slope_ratio: f64, intercept0: f64 },
    /// [`TruthSpec::Linear`] with a binary `x3` choosing the slope ratio.
    Stratified { slopes: [f64; 2] },
    /// Latent skills with noisy scores `x1` (reading) and `x2` (math).
    Skill { params: SkillModelParams, rule: LinearRule },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    #[serde(flatten)]
    pub spec: TruthSpec,
    pub noise_sd: f64,
}

fn quadratic_m0(t: f64) -> f64 {
    0.2 + 0.5 * t + 0.25 * t * t
}

impl SyntheticTruth {
    pub fn treated(&self, x: &[f64]) -> bool {
        match &self.spec {
            TruthSpec::Expository => 0.4 * x[0] + x[1] <= 0.7,
            TruthSpec::Linear { .. } | TruthSpec::Stratified { .. } => x[0] <= 0.5,
            TruthSpec::Skill { rule, .. } => rule.treats(x),
        }
    }

    /// `E[Y(d) | X = x]`.
    pub fn mu(&self, d: bool, x: &[f64]) -> f64 {
        match &self.spec {
            TruthSpec::Expository => {
                let t = x[0] + x[1];
                if d {
                    0.5 + 0.6 * t
                } else {
                    quadratic_m0(t)
                }
            }
            TruthSpec::Linear {
                slope_ratio,
                intercept0,
            } => {
                let t = x[0] + x[1];
                if d {
                    t
                } else {
                    slope_ratio * t + intercept0
                }
            }
            TruthSpec::Stratified { slopes } => {
                let t = x[0] + x[1];
                if d {
                    t
                } else {
                    slopes[(x[2] > 0.5) as usize] * t
                }
            }
            TruthSpec::Skill { params, .. } => {
                let e = params.effect;
                let xi = params.posterior_mean(x);
                if d {
                    e.a1 + e.b1 * xi
                } else {
                    e.a0 + e.b0 * xi
                }
            }
        }
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        self.mu(true, x)
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        self.mu(false, x)
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        self.mu1(x) - self.mu0(x)
    }

    /// Closed domain of `q_target`; `None` when unbounded or stratum-specific.
    pub fn q_domain(&self, target: u8) -> Option<(f64, f64)> {
        match &self.spec {
            TruthSpec::Expository => Some(if target == 0 {
                (0.5 + 0.6 * 0.7, 0.5 + 0.6 * 1.3)
            } else {
                (quadratic_m0(0.7), quadratic_m0(1.3))
            }),
            TruthSpec::Linear {
                slope_ratio,
                intercept0,
            } => Some(if target == 0 {
                (0.5, 1.5)
            } else {
                let (a, b) = (slope_ratio * 0.5 + intercept0, slope_ratio * 1.5 + intercept0);
                (a.min(b), a.max(b))
            }),
            TruthSpec::Stratified { .. } | TruthSpec::Skill { .. } => None,
        }
    }

    fn in_domain(&self, target: u8, y: f64) -> bool {
        self.q_domain(target).is_none_or(|(lo, hi)| lo <= y && y <= hi)
    }

    /// `q0(y)`: untreated mean at the frontier point where the treated mean is `y`.
    pub fn q0(&self, y: f64) -> Option<f64> {
        if !self.in_domain(0, y) {
            return None;
        }
        match &self.spec {
            TruthSpec::Expository => Some(quadratic_m0((y - 0.5) / 0.6)),
            TruthSpec::Linear {
                slope_ratio,
                intercept0,
            } => Some(slope_ratio * y + intercept0),
            TruthSpec::Stratified { .. } => None,
            TruthSpec::Skill { params, .. } => {
                let e = params.effect;
                Some(e.a0 + e.b0 * (y - e.a1) / e.b1)
            }
        }
    }

    /// `q1(y)`: treated mean at the frontier point where the untreated mean is `y`.
    pub fn q1(&self, y: f64) -> Option<f64> {
        if !self.in_domain(1, y) {
            return None;
        }
        match &self.spec {
            TruthSpec::Expository => Some(0.5 + 0.6 * (2.0 * (0.05 + y).sqrt() - 1.0)),
            TruthSpec::Linear {
                slope_ratio,
                intercept0,
            } => Some((y - intercept0) / slope_ratio),
            TruthSpec::Stratified { .. } => None,
            TruthSpec::Skill { params, .. } => {
                let e = params.effect;
                Some(e.a1 + e.b1 * (y - e.a0) / e.b0)
            }
        }
    }

    /// Stratum-specific `q0` of the stratified design.
    pub fn q0_stratum(&self, y: f64, stratum: usize) -> Option<f64> {
        match &self.spec {
            TruthSpec::Stratified { slopes } if (0.5..=1.5).contains(&y) => Some(slopes[stratum.min(1)] * y),
            _ => None,
        }
    }
}

fn names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("x{j}")).collect()
}

fn noise(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|_| Error::InvalidArgument(format!("noise sd must be nonnegative, got {sd}")))
}

fn uniform_design(
    n: usize,
    noise_sd: f64,
    seed: u64,
    truth: SyntheticTruth,
    k: usize,
) -> Result<(Dataset, SyntheticTruth)> {
    let eps = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * k);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut row = vec![0.0; k];
    for _ in 0..n {
        row[0] = rng.random::<f64>();
        row[1] = rng.random::<f64>();
        if k > 2 {
            row[2] = rng.random_bool(0.5) as u8 as f64;
        }
        let di = truth.treated(&row);
        y.push(truth.mu(di, &row) + eps.sample(&mut rng));
        d.push(di);
        x.extend_from_slice(&row);
    }
    Ok((Dataset::new(y, d, x, names(k))?, truth))
}

/// Design with an oblique frontier and non-parallel contours.
pub fn gen_expository(n: usize, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    let truth = SyntheticTruth {
        spec: TruthSpec::Expository,
        noise_sd: 0.1,
    };
    uniform_design(n, 0.1, seed, truth, 2)
}

/// Linear design with `E[Y(0)|x] = c(x1 + x2)`.
pub fn gen_linear_oracle(n: usize, slope_ratio: f64, noise_sd: f64, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    gen_linear_shifted(n, slope_ratio, 0.0, noise_sd, seed)
}

/// Linear design with `E[Y(0)|x] = c(x1 + x2) + intercept0`.
pub fn gen_linear_shifted(
    n: usize,
    slope_ratio: f64,
    intercept0: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset, SyntheticTruth)> {
    if slope_ratio == 0.0 || !slope_ratio.is_finite() {
        return Err(Error::InvalidArgument("slope ratio must be finite and nonzero".into()));
    }
    let truth = SyntheticTruth {
        spec: TruthSpec::Linear {
            slope_ratio,
            intercept0,
        },
        noise_sd,
    };
    uniform_design(n, noise_sd, seed, truth, 2)
}

/// Linear design whose untreated slope depends on a binary `x3`.
pub fn gen_stratified_linear(
    n: usize,
    slopes: [f64; 2],
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset, SyntheticTruth)> {
    if slopes.iter().any(|s| !(s.is_finite() && *s != 0.0)) {
        return Err(Error::InvalidArgument("slopes must be finite and nonzero".into()));
    }
    let truth = SyntheticTruth {
        spec: TruthSpec::Stratified { slopes },
        noise_sd,
    };
    uniform_design(n, noise_sd, seed, truth, 3)
}

/// Skill-formation design: scores `x1 = ξ_r + e_r`, `x2 = ξ_m + e_m`,
/// outcome `g_D(ξ_m, η)`.
pub fn gen_skill_model(
    n: usize,
    params: &SkillModelParams,
    rule: &LinearRule,
    seed: u64,
) -> Result<(Dataset, SyntheticTruth)> {
    params.validate()?;
    if rule.weights.len() != 2 {
        return Err(Error::InvalidArgument("skill rule needs two weights".into()));
    }
    let eta = noise(params.eta_sd)?;
    let l11 = params.sigma_r2.sqrt();
    let l21 = params.sigma_rm / l11;
    let l22 = (params.sigma_m2 - l21 * l21).sqrt();
    let (or, om) = (params.omega_r2.sqrt(), params.omega_m2.sqrt());
    let e = params.effect;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let xi_r = params.mu_r + l11 * z1;
        let xi_m = params.mu_m + l21 * z1 + l22 * z2;
        let e_r: f64 = StandardNormal.sample(&mut rng);
        let e_m: f64 = StandardNormal.sample(&mut rng);
        let row = [xi_r + or * e_r, xi_m + om * e_m];
        let di = rule.treats(&row);
        let (a, b) = if di { (e.a1, e.b1) } else { (e.a0, e.b0) };
        y.push(a + b * xi_m + eta.sample(&mut rng));
        d.push(di);
        x.extend_from_slice(&row);
    }
    let truth = SyntheticTruth {
        spec: TruthSpec::Skill {
            params: params.clone(),
            rule: rule.clone(),
        },
        noise_sd: params.eta_sd,
    };
    Ok((Dataset::new(y, d, x, names(2))?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expository_rule_examples() {
        let t = SyntheticTruth {
            spec: TruthSpec::Expository,
            noise_sd: 0.1,
        };
        assert!(t.treated(&[0.2, 0.3]));
        assert!(!t.treated(&[0.9, 0.9]));
    }

    #[test]
    fn gamma_examples() {
        let mut p = SkillModelParams {
            sigma_rm: 0.0,
            ..Default::default()
        };
        assert_eq!(p.gamma(), 0.0);
        assert_eq!(p.posterior_coefficients().0, 0.0);
        p.sigma_rm = 0.5;
        assert!(p.gamma() > 0.0);
        p.sigma_rm = -0.5;
        assert!(p.gamma() < 0.0);
        let (c_r, c_m) = SkillModelParams::default().posterior_coefficients();
        assert!((c_r / c_m - SkillModelParams::default().gamma()).abs() < 1e-15);
    }

    #[test]
    fn invalid_covariance() {
        let p = SkillModelParams {
            sigma_rm: 1.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidCovariance(_))));
        let p = SkillModelParams {
            omega_m2: 0.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn linear_closed_forms() {
        let (_, t) = gen_linear_oracle(10, 0.5, 0.1, 1).unwrap();
        assert_eq!(t.q_domain(0), Some((0.5, 1.5)));
        assert_eq!(t.q0(1.0), Some(0.5));
        assert_eq!(t.q0(1.6), None);
        assert_eq!(t.q1(0.5), Some(1.0));
        assert_eq!(t.tau(&[0.3, 0.4]), 0.5 * 0.7);
        let (_, t) = gen_linear_oracle(10, 1.0, 0.1, 1).unwrap();
        assert_eq!(t.q0(0.8), Some(0.8));
    }

    #[test]
    fn expository_inverse_pair() {
        let (_, t) = gen_expository(10, 3).unwrap();
        for k in 0..=20 {
            let y = 0.92 + 0.36 * k as f64 / 20.0;
            let back = t.q1(t.q0(y).unwrap()).unwrap();
            assert!((back - y).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = gen_expository(500, 11).unwrap().0;
        let b = gen_expository(500, 11).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, gen_expository(500, 12).unwrap().0);
    }
}
