//! Central finite-difference gradient checking.

mod suite;

pub use suite::{layer_suite, model_check, Check};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Denominator floor for [`relative_error`], so that coordinates where both
/// gradients vanish are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates re-estimated with smaller steps by [`grad_check_refined`].
    pub refined: usize,
}

/// Compares `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h` at the
/// listed coordinates of `point` (all coordinates when `coords` is `None`).
pub fn grad_check_at<F>(f: F, point: &Tensor, analytic: &Tensor, h: f64, coords: Option<&[usize]>) -> Result<GradCheck>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    check(f, point, analytic, h, coords, None)
}

/// Like [`grad_check_at`], but a coordinate whose error exceeds `tolerance`
/// is re-estimated with steps `h / 10` and `h / 100`, keeping the smallest
/// error. A ReLU or max whose switch point lies within `h` of the probe
/// makes the step-`h` difference straddle a kink; the smaller steps stay on
/// one side of it while a wrong analytic gradient stays wrong.
pub fn grad_check_refined<F>(
    f: F,
    point: &Tensor,
    analytic: &Tensor,
    h: f64,
    coords: Option<&[usize]>,
    tolerance: f64,
) -> Result<GradCheck>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    check(f, point, analytic, h, coords, Some(tolerance))
}

fn check<F>(
    mut f: F,
    point: &Tensor,
    analytic: &Tensor,
    h: f64,
    coords: Option<&[usize]>,
    refine_above: Option<f64>,
) -> Result<GradCheck>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    analytic.expect_shape(point.shape())?;
    if !(h > 0.0) {
        return Err(invalid!("finite-difference step must be positive, got {}", h));
    }
    let base = f(point)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(alloc::format!("loss {} at the probe point", base)));
    }
    let mut probe = point.clone();
    let mut report = GradCheck { max_relative_error: 0.0, worst_index: 0, checked: 0, refined: 0 };
    let mut central = |i: usize, h: f64, probe: &mut Tensor| -> Result<f64> {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(alloc::format!("loss near coordinate {}", i)));
        }
        Ok((up - down) / (2.0 * h))
    };
    let mut visit = |i: usize, probe: &mut Tensor| -> Result<()> {
        let a = analytic.data()[i];
        let mut err = relative_error(a, central(i, h, probe)?);
        if let Some(tol) = refine_above {
            if err > tol {
                report.refined += 1;
                for step in [h / 10.0, h / 100.0] {
                    err = err.min(relative_error(a, central(i, step, probe)?));
                }
            }
        }
        if err > report.max_relative_error || report.checked == 0 {
            report.max_relative_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
        Ok(())
    };
    match coords {
        Some(list) => {
            for &i in list {
                if i >= point.len() {
                    return Err(invalid!("coordinate {} out of range {}", i, point.len()));
                }
                visit(i, &mut probe)?;
            }
        }
        None => {
            for i in 0..point.len() {
                visit(i, &mut probe)?;
            }
        }
    }
    Ok(report)
}

/// Checks every coordinate; returns the maximum relative error.
pub fn grad_check<F>(f: F, point: &Tensor, analytic: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    Ok(grad_check_at(f, point, analytic, h, None)?.max_relative_error)
}
