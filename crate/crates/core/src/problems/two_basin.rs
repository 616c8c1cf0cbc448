use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::ParamVector;

/// Separable potential `Σ h(θ_i)`, `h(x) = (1 + s·tanh x)(x² - 1)²`.
///
/// Both minima at `x = ±1` have zero loss; the right one is sharper.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBasin {
    pub n: usize,
    pub s_tilt: f64,
}

impl TwoBasin {
    pub fn new(n: usize, s_tilt: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("two-basin needs n >= 1".into()));
        }
        if !(s_tilt > 0.0 && s_tilt < 1.0) {
            return Err(Error::InvalidConfig(format!("s_tilt must lie in (0, 1), got {s_tilt}")));
        }
        Ok(TwoBasin { n, s_tilt })
    }

    pub fn h(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        (1.0 + self.s_tilt * x.tanh()) * q * q
    }

    pub fn dh(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        let t = x.tanh();
        let sech2 = 1.0 - t * t;
        self.s_tilt * sech2 * q * q + (1.0 + self.s_tilt * t) * 4.0 * x * q
    }

    pub fn d2h(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        let t = x.tanh();
        let sech2 = 1.0 - t * t;
        let a = 1.0 + self.s_tilt * t;
        let da = self.s_tilt * sech2;
        let d2a = -2.0 * self.s_tilt * sech2 * t;
        d2a * q * q + 2.0 * da * 4.0 * x * q + a * (12.0 * x * x - 4.0)
    }

    /// `h''(1) / h''(-1)`.
    pub fn curvature_ratio(&self) -> f64 {
        let t = 1f64.tanh();
        (1.0 + self.s_tilt * t) / (1.0 - self.s_tilt * t)
    }

    /// Local maximum of `h` between the two minima; left of it is the flat basin.
    pub fn barrier(&self) -> f64 {
        let (mut lo, mut hi) = (-0.99, 0.99);
        // h' > 0 just right of -1 and < 0 just left of +1.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.dh(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        check_len(self.n, theta.len())?;
        check_finite("parameters", theta)
    }
}

impl Objective for TwoBasin {
    fn dim(&self) -> usize {
        self.n
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(theta.iter().map(|&x| self.h(x)).sum())
    }

    fn grad(&self, theta: &[f64]) -> Result<ParamVector> {
        self.check(theta)?;
        Ok(theta.iter().map(|&x| self.dh(x)).collect::<Vec<_>>().into())
    }

    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector> {
        self.check(theta)?;
        Ok(theta.iter().map(|&x| self.d2h(x)).collect::<Vec<_>>().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_grad, fd_hessian_diag};

    #[test]
    fn equal_depths_and_ratio() {
        let tb = TwoBasin::new(1, 0.9).unwrap();
        assert_eq!(tb.h(-1.0), 0.0);
        assert_eq!(tb.h(1.0), 0.0);
        let r = tb.d2h(1.0) / tb.d2h(-1.0);
        assert!((r - tb.curvature_ratio()).abs() < 1e-9);
        assert!((r - 5.358).abs() < 1e-3);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let tb = TwoBasin::new(3, 0.9).unwrap();
        let th = [-1.3, 0.2, 0.9];
        let g = tb.grad(&th).unwrap();
        let f = fd_grad(&tb, &th, 1e-6).unwrap();
        let h = tb.hessian_diag(&th).unwrap();
        let fh = fd_hessian_diag(&tb, &th, 1e-4).unwrap();
        for i in 0..3 {
            assert!((g[i] - f[i]).abs() < 1e-7);
            assert!((h[i] - fh[i]).abs() < 1e-5);
        }
        let at_min = fd_grad(&tb, &[-1.0, 1.0, 1.0], 1e-6).unwrap();
        assert!(at_min.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn barrier_is_a_local_maximum() {
        let tb = TwoBasin::new(1, 0.9).unwrap();
        let x = tb.barrier();
        assert!(tb.dh(x).abs() < 1e-9);
        assert!(tb.d2h(x) < 0.0);
        assert!(x > -1.0 && x < 1.0);
    }
}
