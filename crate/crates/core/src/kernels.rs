//! Second-order kernels used by every smoother in the crate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// 0.75 quantile of the standard normal distribution.
const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

/// Gaussian weights are cut off beyond this many bandwidths so that
/// neighborhood queries stay finite.
pub const GAUSSIAN_TRUNCATION: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Uniform,
    Triangular,
    Epanechnikov,
    Gaussian,
}

/// Closed-form moments of a kernel density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    /// ∫ u² K(u) du
    pub mu2: f64,
    /// ∫ K(u)² du
    pub rk: f64,
    /// 0.75 quantile of K viewed as a density.
    pub q75: f64,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Uniform,
        Kernel::Triangular,
        Kernel::Epanechnikov,
        Kernel::Gaussian,
    ];

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Triangular => (1.0 - a).max(0.0),
            Kernel::Epanechnikov => (0.75 * (1.0 - a * a)).max(0.0),
            Kernel::Gaussian => (-0.5 * a * a).exp() / (2.0 * PI).sqrt(),
        }
    }

    /// Weight used inside neighborhood sums: `eval(u)` within the search
    /// radius, zero beyond it.
    #[inline]
    pub fn weight(self, u: f64) -> f64 {
        if u.abs() > self.support_radius() {
            0.0
        } else {
            self.eval(u)
        }
    }

    /// Radius (in bandwidths) beyond which [`Kernel::weight`] vanishes.
    pub fn support_radius(self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSSIAN_TRUNCATION,
            _ => 1.0,
        }
    }

    pub fn is_compact(self) -> bool {
        !matches!(self, Kernel::Gaussian)
    }

    pub fn moments(self) -> KernelMoments {
        match self {
            Kernel::Uniform => KernelMoments {
                mu2: 1.0 / 3.0,
                rk: 0.5,
                q75: 0.5,
            },
            Kernel::Triangular => KernelMoments {
                mu2: 1.0 / 6.0,
                rk: 2.0 / 3.0,
                // solves 1/2 + u - u²/2 = 3/4 on [0, 1]
                q75: 1.0 - 0.5_f64.sqrt(),
            },
            Kernel::Epanechnikov => KernelMoments {
                mu2: 0.2,
                rk: 0.6,
                // root of u³ - 3u + 1 in [0, 1]
                q75: 2.0 * (4.0 * PI / 9.0).cos(),
            },
            Kernel::Gaussian => KernelMoments {
                mu2: 1.0,
                rk: 1.0 / (2.0 * PI.sqrt()),
                q75: NORMAL_Q75,
            },
        }
    }

    /// ω = 2·q75, the multiplier in the near-frontier radius rule ε = ω·h.
    pub fn omega(self) -> f64 {
        2.0 * self.moments().q75
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Kernel::Uniform),
            "triangular" => Ok(Kernel::Triangular),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
        let dx = (hi - lo) / steps as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..steps {
            acc += f(lo + dx * i as f64);
        }
        acc * dx
    }

    fn bounds(k: Kernel) -> (f64, f64) {
        if k.is_compact() {
            (-1.0, 1.0)
        } else {
            (-12.0, 12.0)
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Kernel::Uniform.eval(0.3), 0.5);
        assert_eq!(Kernel::Uniform.eval(1.5), 0.0);
        assert_eq!(Kernel::Triangular.eval(0.5), 0.5);
        assert_eq!(Kernel::Epanechnikov.eval(1.2), 0.0);
    }

    #[test]
    fn integrates_to_one_with_zero_mean() {
        for k in Kernel::ALL {
            let (lo, hi) = bounds(k);
            let mass = trapezoid(|u| k.eval(u), lo, hi, 200_000);
            let first = trapezoid(|u| u * k.eval(u), lo, hi, 200_000);
            assert!((mass - 1.0).abs() < 1e-6, "{k}: mass {mass}");
            assert!(first.abs() < 1e-6, "{k}: first moment {first}");
        }
    }

    #[test]
    fn symmetric() {
        for k in Kernel::ALL {
            for i in 0..200 {
                let u = -2.5 + 0.0253 * i as f64;
                assert_eq!(k.eval(u), k.eval(-u));
            }
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for k in Kernel::ALL {
            let (lo, hi) = bounds(k);
            let m = k.moments();
            // Uniform has a jump at ±1; the trapezoid endpoints handle it exactly.
            let mu2 = trapezoid(|u| u * u * k.eval(u), lo, hi, 400_000);
            let rk = trapezoid(|u| k.eval(u).powi(2), lo, hi, 400_000);
            assert!((m.mu2 - mu2).abs() < 1e-8, "{k}: mu2 {} vs {mu2}", m.mu2);
            assert!((m.rk - rk).abs() < 1e-8, "{k}: rk {} vs {rk}", m.rk);
        }
    }

    #[test]
    fn q75_is_the_three_quarter_point() {
        for k in Kernel::ALL {
            let (lo, _) = bounds(k);
            let q = k.moments().q75;
            let cdf = trapezoid(|u| k.eval(u), lo, q, 400_000);
            assert!((cdf - 0.75).abs() < 1e-7, "{k}: cdf(q75) = {cdf}");
        }
    }

    #[test]
    fn omega_values() {
        assert_eq!(Kernel::Uniform.omega(), 1.0);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let q = normal.inverse_cdf(0.75);
        assert!((Kernel::Gaussian.omega() - 2.0 * q).abs() < 1e-12);
        assert!((Kernel::Gaussian.omega() - 1.34898).abs() < 1e-5);
        assert!((Kernel::Triangular.omega() - 0.58579).abs() < 1e-5);
        assert!((Kernel::Epanechnikov.moments().q75 - 0.347_296).abs() < 1e-6);
    }

    #[test]
    fn truncated_weight() {
        assert_eq!(Kernel::Gaussian.weight(4.5), 0.0);
        assert!(Kernel::Gaussian.weight(3.9) > 0.0);
        assert!(Kernel::Gaussian.eval(4.0) < 3.4e-4);
    }

    #[test]
    fn parses_names() {
        for k in Kernel::ALL {
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
        assert!("box".parse::<Kernel>().is_err());
    }
}
