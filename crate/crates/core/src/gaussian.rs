//! Standard normal CDF, its inverse, and the dispersion-scaled `Ψ`.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// `G(z)`, the standard normal CDF.
pub fn gaussian_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-z / SQRT_2)
}

fn gaussian_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `G⁻¹(eps)` for `eps` strictly inside `(0, 1)`.
pub fn gaussian_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse Gaussian CDF needs eps in (0, 1), got {eps}"
        )));
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * eps);
    // statrs gives a coarse start; polish on the forward CDF
    for _ in 0..3 {
        let pdf = gaussian_pdf(z);
        if pdf <= 1e-300 {
            break;
        }
        z -= (gaussian_cdf(z) - eps) / pdf;
    }
    Ok(z)
}

/// `Ψ_V(s) = G(s/√V)`, with the step convention (0 below zero, 1 at and
/// above) when the dispersion `V` is zero.
pub fn psi(dispersion: f64, s: f64) -> f64 {
    if dispersion > 0.0 {
        if s == f64::INFINITY {
            1.0
        } else if s == f64::NEG_INFINITY {
            0.0
        } else {
            gaussian_cdf(s / dispersion.sqrt())
        }
    } else if s < 0.0 {
        0.0
    } else {
        1.0
    }
}
