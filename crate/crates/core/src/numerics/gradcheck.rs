use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Absolute differences below this are not amplified into large relative
/// errors; it sits well above the roundoff floor of central differences.
const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&Matrix) -> f64,
    x: &Matrix,
    eps: f64,
) -> Result<Matrix> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("finite difference step must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            probe.set(r, c, orig + eps);
            let plus = f(&probe);
            probe.set(r, c, orig - eps);
            let minus = f(&probe);
            probe.set(r, c, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite function value while perturbing entry ({r}, {c})"
                )));
            }
            grad.set(r, c, (plus - minus) / (2.0 * eps));
        }
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> Result<f64> {
    analytic.check_same_shape("max_relative_error", numeric)?;
    Ok(analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}
