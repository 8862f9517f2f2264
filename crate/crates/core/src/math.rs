//! Float math shims: std intrinsics normally, libm under no_std.

#[cfg(feature = "std")]
mod imp {
    pub(crate) fn exp(x: f64) -> f64 {
        x.exp()
    }
    pub(crate) fn ln(x: f64) -> f64 {
        x.ln()
    }
    pub(crate) fn log10(x: f64) -> f64 {
        x.log10()
    }
    pub(crate) fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    pub(crate) fn floor(x: f64) -> f64 {
        x.floor()
    }
    pub(crate) fn ceil(x: f64) -> f64 {
        x.ceil()
    }
    pub(crate) fn fract(x: f64) -> f64 {
        x.fract()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub(crate) fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    pub(crate) fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    pub(crate) fn log10(x: f64) -> f64 {
        libm::log10(x)
    }
    pub(crate) fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    pub(crate) fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    pub(crate) fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
    pub(crate) fn fract(x: f64) -> f64 {
        x - libm::trunc(x)
    }
}

pub(crate) use imp::{ceil, exp, floor, fract, ln, log10, sqrt};
