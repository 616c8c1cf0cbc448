use super::Objective;
use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::ParamVector;

fn check_step<O: Objective + ?Sized>(obj: &O, theta: &[f64], h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    check_len(obj.dim(), theta.len())?;
    check_finite("parameters", theta)
}

/// Central-difference gradient of `obj.loss`.
pub fn fd_grad<O: Objective + ?Sized>(obj: &O, theta: &[f64], h: f64) -> Result<ParamVector> {
    check_step(obj, theta, h)?;
    let mut x = theta.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let up = obj.loss(&x)?;
        x[i] = x0 - h;
        let down = obj.loss(&x)?;
        x[i] = x0;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out.into())
}

/// Central second difference along each coordinate.
pub fn fd_hessian_diag<O: Objective + ?Sized>(obj: &O, theta: &[f64], h: f64) -> Result<ParamVector> {
    check_step(obj, theta, h)?;
    let mut x = theta.to_vec();
    let mid = obj.loss(&x)?;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let up = obj.loss(&x)?;
        x[i] = x0 - h;
        let down = obj.loss(&x)?;
        x[i] = x0;
        out.push((up - 2.0 * mid + down) / (h * h));
    }
    Ok(out.into())
}
