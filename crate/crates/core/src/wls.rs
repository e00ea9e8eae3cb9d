//! Small dense weighted least squares via normal equations.

use crate::error::{Error, Result};

/// Relative size of the diagonal ridge added when the normal matrix is
/// numerically singular.
pub const RIDGE_FLOOR: f64 = 1e-10;

/// Streaming accumulator for `min Σ w_i (y_i − (1, z_i')β)²`.
#[derive(Debug, Clone)]
pub struct WlsAccumulator {
    p: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    positive: usize,
    row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    /// Intercept first, then one slope per regressor.
    pub coef: Vec<f64>,
    /// Observations that entered with a strictly positive weight.
    pub effective_n: usize,
    /// The ridge floor was needed to factor the normal matrix.
    pub regularized: bool,
}

impl WlsAccumulator {
    /// `regressors` excludes the intercept.
    pub fn new(regressors: usize) -> Self {
        let p = regressors + 1;
        Self {
            p,
            xtx: vec![0.0; p * p],
            xty: vec![0.0; p],
            positive: 0,
            row: vec![0.0; p],
        }
    }

    #[inline]
    pub fn add(&mut self, w: f64, z: &[f64], y: f64) {
        if w <= 0.0 {
            return;
        }
        self.positive += 1;
        let p = self.p;
        self.row[0] = 1.0;
        self.row[1..].copy_from_slice(z);
        for a in 0..p {
            let wa = w * self.row[a];
            self.xty[a] += wa * y;
            for b in 0..=a {
                self.xtx[a * p + b] += wa * self.row[b];
            }
        }
    }

    pub fn effective_n(&self) -> usize {
        self.positive
    }

    pub fn solve(&self) -> Result<WlsSolution> {
        let p = self.p;
        if self.positive < p {
            return Err(Error::InsufficientSupport {
                effective_n: self.positive,
                required: p,
            });
        }
        let trace: f64 = (0..p).map(|a| self.xtx[a * p + a]).sum();
        let floor = RIDGE_FLOOR * trace;
        let mut regularized = false;
        let factor = match cholesky(&self.xtx, p, 0.0, floor) {
            Some(l) => l,
            None => {
                regularized = true;
                cholesky(&self.xtx, p, floor, 0.0).ok_or(Error::InsufficientSupport {
                    effective_n: self.positive,
                    required: p,
                })?
            }
        };
        let coef = cholesky_solve(&factor, p, &self.xty);
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::InsufficientSupport {
                effective_n: self.positive,
                required: p,
            });
        }
        Ok(WlsSolution {
            coef,
            effective_n: self.positive,
            regularized,
        })
    }
}

/// Lower Cholesky factor of the symmetric matrix whose lower triangle is
/// stored in `a`, after adding `ridge` to the diagonal. Fails when a pivot
/// does not exceed `min_pivot`.
fn cholesky(a: &[f64], p: usize, ridge: f64, min_pivot: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            if i == j {
                s += ridge;
            }
            for m in 0..j {
                s -= l[i * p + m] * l[j * p + m];
            }
            if i == j {
                if !(s > min_pivot) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i * p + m] * z[m];
        }
        z[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for m in i + 1..p {
            s -= l[m * p + i] * x[m];
        }
        x[i] = s / l[i * p + i];
    }
    x
}
