//! Derivative-free 1-D minimization on a logarithmic axis.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMinimum {
    pub x: f64,
    pub value: f64,
    /// Set when the minimizer is pinned to an end of the search interval.
    pub boundary: Option<Boundary>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` over `[lo, hi]` (both > 0) by golden-section search in
/// `ln x`, followed by one parabolic refinement step. `rel_tol` bounds the
/// relative width of the final bracket in `x`.
pub fn minimize_log<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<LogMinimum>
where
    F: FnMut(f64) -> f64,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "log search interval must satisfy 0 < lo < hi < inf, got [{lo}, {hi}]"
        )));
    }
    let mut eval = |u: f64| -> Result<f64> {
        let v = f(u.exp());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::computation(format!(
                "objective is not finite at x = {}",
                u.exp()
            )))
        }
    };

    let (ulo, uhi) = (lo.ln(), hi.ln());
    let mut a = ulo;
    let mut b = uhi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    // relative width in x ≈ width in ln x
    let tol = rel_tol.max(1e-15);
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }

    let (mut u, mut fu) = if fc <= fd { (c, fc) } else { (d, fd) };

    // parabola through (c, fc), (u, fu), (d, fd) when u is interior
    let (x0, x1, x2) = (a, u, b);
    let (f0, f2) = (eval(x0)?, eval(x2)?);
    let num = (x1 - x0).powi(2) * (fu - f2) - (x1 - x2).powi(2) * (fu - f0);
    let den = (x1 - x0) * (fu - f2) - (x1 - x2) * (fu - f0);
    if den.abs() > 0.0 {
        let cand = x1 - 0.5 * num / den;
        if cand > x0 && cand < x2 {
            let fcand = eval(cand)?;
            if fcand < fu {
                u = cand;
                fu = fcand;
            }
        }
    }

    // endpoints can beat the interior bracket when f is monotone
    let flo = eval(ulo)?;
    let fhi = eval(uhi)?;
    let mut boundary = None;
    if flo <= fu && flo <= fhi {
        u = ulo;
        fu = flo;
        boundary = Some(Boundary::Lower);
    } else if fhi <= fu {
        u = uhi;
        fu = fhi;
        boundary = Some(Boundary::Upper);
    } else if u - ulo <= 2.0 * tol {
        boundary = Some(Boundary::Lower);
    } else if uhi - u <= 2.0 * tol {
        boundary = Some(Boundary::Upper);
    }

    Ok(LogMinimum {
        x: u.exp(),
        value: fu,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let m = minimize_log(|x| (x.ln() - 2.0f64.ln()).powi(2) + 1.0, 1e-3, 1e3, 1e-9).unwrap();
        assert!((m.x - 2.0).abs() < 1e-6);
        assert!(m.boundary.is_none());
    }

    #[test]
    fn monotone_objective_hits_boundary() {
        let m = minimize_log(|x| -x, 0.1, 10.0, 1e-8).unwrap();
        assert_eq!(m.boundary, Some(Boundary::Upper));
        assert_eq!(m.x, 10.0f64.ln().exp());
        let m = minimize_log(|x| x, 0.1, 10.0, 1e-8).unwrap();
        assert_eq!(m.boundary, Some(Boundary::Lower));
    }

    #[test]
    fn nan_objective_is_an_error() {
        assert!(minimize_log(|_| f64::NAN, 0.1, 10.0, 1e-6).is_err());
        assert!(minimize_log(|x| x, 0.0, 10.0, 1e-6).is_err());
    }
}
