//! The truncated imaginary-order Riesz multiplier `(1 - |ξ|^{2m}/λ)^{iτ}` of the
//! polyharmonic operator `(-Δ)^m`, zero outside the open ball `|ξ|^{2m} < λ`.
//!
//! `λ` is the spectral level; the ball radius is `R = λ^{1/(2m)}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolParams {
    m: u32,
    lambda: f64,
    tau: f64,
}

impl SymbolParams {
    pub fn new(m: u32, lambda: f64, tau: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("polyharmonic order m must be >= 1".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be finite, got {tau}")));
        }
        Ok(Self { m, lambda, tau })
    }

    /// Parametrizes by ball radius: `λ = R^{2m}`.
    pub fn from_radius(m: u32, radius: f64, tau: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        Self::new(m, radius.powi(2 * m as i32), tau)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn radius(&self) -> f64 {
        self.lambda.powf(1.0 / (2.0 * self.m as f64))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.m, lambda, self.tau)
    }
}

/// `|ξ|^{2m}` from `|ξ|²`. Every lattice quantity compared against `λ` goes through here.
#[inline]
pub fn spectral_level(norm_sq: f64, m: u32) -> f64 {
    norm_sq.powi(m as i32)
}

/// Symbol value given the precomputed level `|ξ|^{2m}`.
#[inline]
pub fn symbol_at_level(level: f64, lambda: f64, tau: f64) -> Complex64 {
    if level >= lambda {
        return Complex64::new(0.0, 0.0);
    }
    if tau == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    // 0 < 1 - u <= 1 on the open ball.
    let log_gap = (-level / lambda).ln_1p();
    Complex64::from_polar(1.0, tau * log_gap)
}

/// Symbol value from the gap `q = 1 - |ξ|^{2m}/λ ∈ (0, 1]`, for callers that know `q`
/// more accurately than `level/λ` (quadrature nodes crowding the sphere).
#[inline]
pub fn symbol_from_gap(gap: f64, tau: f64) -> Complex64 {
    if gap <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if tau == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    Complex64::from_polar(1.0, tau * gap.ln())
}

pub fn evaluate_symbol(p: &SymbolParams, xi: &[f64]) -> Complex64 {
    let norm_sq: f64 = xi.iter().map(|v| v * v).sum();
    symbol_at_level(spectral_level(norm_sq, p.m), p.lambda, p.tau)
}

pub fn apply_multiplier(p: &SymbolParams, g: &SpectralField) -> SpectralField {
    let spec = *g.spec();
    let coeffs = g
        .coeffs()
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            let level = spectral_level(spec.frequency_norm_sq(flat), p.m);
            symbol_at_level(level, p.lambda, p.tau) * c
        })
        .collect();
    SpectralField::new(spec, coeffs).expect("multiplier of modulus <= 1 keeps coefficients finite")
}
