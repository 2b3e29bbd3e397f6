//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into `panels` equal pieces so that narrow
/// features are not missed by the coarse initial estimate.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = simpson(lo, hi, flo, fmid, fhi);
        total += refine(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, MAX_DEPTH)
            .ok_or(Error::Quadrature { a: lo, b: hi })?;
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return None;
    }
    Some(
        refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 1).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(|x| norm * (-0.5 * x * x).exp(), -10.0, 10.0, 1e-12, 8).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn non_finite_integrand_fails() {
        assert!(integrate(|x| 1.0 / x, -1.0, 1.0, 1e-10, 2).is_err());
    }
}
