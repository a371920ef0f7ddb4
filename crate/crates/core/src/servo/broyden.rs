use nalgebra::{DMatrix, DVector};

use super::ServoError;

/// Commands shorter than this carry no usable secant information.
pub const U_MIN_NORM: f64 = 1e-6;

/// Rank-one secant correction `J + ε(s − Ju)uᵀ/(uᵀu)`.
///
/// With `rate = 1` the result satisfies `J'u = s`.
pub fn broyden_update(
    j: &DMatrix<f64>,
    s: &DVector<f64>,
    u: &DVector<f64>,
    rate: f64,
) -> Result<DMatrix<f64>, ServoError> {
    let uu = u.norm_squared();
    if uu.sqrt() <= U_MIN_NORM {
        return Err(ServoError::DegenerateExcitation);
    }
    let residual = s - j * u;
    Ok(j + (residual * u.transpose()) * (rate / uu))
}
