//! `libm` shims so the rest of the crate reads like ordinary float code.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub(crate) fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Floor of a product that is integral in exact arithmetic but may land a
/// few ulps below the integer in floating point (e.g. `300 * (1/3)`).
#[inline]
pub(crate) fn floor_count(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        floor(x + 1e-9) as u64
    }
}
