//! Exponent bookkeeping for the noise splitting and the fixed-point estimates.
//!
//! One `delta` drives everything: the convolution is measured in `H^{-2 alpha}`
//! with `alpha = 1/4 + delta/2` (any `alpha <= 1/4` makes its L2 second moment
//! diverge; the 1D oracle's divergence sentinel witnesses this), and the noise
//! amplitudes must be admissible at `beta = 1/4 - delta/4` (the boundary
//! admissibility series diverges at `beta >= 1/4`). The remaining exponents
//! control the temperature Picard map, whose contraction requires
//! `(gamma + s/2 + 1/2) / (1 - lambda/p - delta/p) < 1`.

use crate::{Error, Result};

/// Validated exponent collection shared across the solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentPack {
    delta: f64,
    s: f64,
    gamma: f64,
    lambda: f64,
    p: f64,
}

impl ExponentPack {
    pub fn new(delta: f64, s: f64, gamma: f64, lambda: f64, p: f64) -> Result<Self> {
        let fail = |msg: String| Err(Error::BadExponents(msg));
        if !(delta > 0.0 && delta < 0.25) {
            return fail(format!("delta must lie in (0, 1/4), got {delta}"));
        }
        if !(0.0..0.5).contains(&s) {
            return fail(format!("s must lie in [0, 1/2), got {s}"));
        }
        if gamma <= 0.25 {
            return fail(format!("gamma must exceed 1/4, got {gamma}"));
        }
        if !(lambda > 0.0 && lambda < 1.0 - delta) {
            return fail(format!(
                "lambda must lie in (0, 1 - delta) = (0, {}), got {lambda}",
                1.0 - delta
            ));
        }
        if p <= 2.0 / (1.0 - delta) {
            return fail(format!(
                "p must exceed 2/(1 - delta) = {}, got {p}",
                2.0 / (1.0 - delta)
            ));
        }
        let pack = ExponentPack {
            delta,
            s,
            gamma,
            lambda,
            p,
        };
        let margin = pack.contraction_ratio();
        if margin >= 1.0 {
            return fail(format!(
                "contraction exponent (gamma + s/2 + 1/2)/(1 - lambda/p - delta/p) = {margin} >= 1"
            ));
        }
        Ok(pack)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Smoothing order spent on the convolution: `alpha = 1/4 + delta/2`.
    pub fn alpha(&self) -> f64 {
        0.25 + 0.5 * self.delta
    }

    /// Admissibility order of the boundary noise: `beta = 1/4 - delta/4`.
    pub fn beta(&self) -> f64 {
        0.25 - 0.25 * self.delta
    }

    /// The exponent ratio that must stay below one for the temperature Picard
    /// map to contract on a short interval.
    pub fn contraction_ratio(&self) -> f64 {
        (self.gamma + 0.5 * self.s + 0.5) / (1.0 - self.lambda / self.p - self.delta / self.p)
    }

    /// Time-integrability exponent of the velocity norm entering the
    /// convolution-forcing estimate, `p / (lambda + delta)`.
    pub fn chi_time_exponent(&self) -> f64 {
        self.p / (self.lambda + self.delta)
    }

    /// Spatial regularity of the velocity trace space, `3/2 - delta - 2/p`.
    pub fn s_p(&self) -> f64 {
        1.5 - self.delta - 2.0 / self.p
    }
}

impl Default for ExponentPack {
    fn default() -> Self {
        ExponentPack::new(0.1, 0.25, 0.26, 0.05, 4.0).expect("default exponents are valid")
    }
}
