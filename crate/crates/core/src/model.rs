//! Algebraic building blocks of the delta-shell model.
//!
//! The potential is a hard wall at `x = 0` plus a barrier
//! `λħ²/(2ma) δ(x - a)`. Inside the well the continuum solution is
//! `A(k) sin(kx)`; outside it is `e^{-ikx} + B(k) e^{ikx}`.
//!
//! Internally everything is expressed through the dimensionless momentum
//! `z = k a` and the dimensionless time `θ = ħ t / (m a²)`; the public
//! functions accept physical quantities and convert.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default guard on `|D(k)|` used by [`spectral_weight`].
pub const POLE_GUARD: f64 = 1e-13;

/// Removable-singularity window of the overlap, in units of `1/a`.
const OVERLAP_TAYLOR_WINDOW: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub mass: f64,
    pub well_width: f64,
    pub hbar: f64,
}

impl ModelParams {
    /// Barrier strength `lambda` in units where `m = a = ħ = 1`.
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_units(lambda, 1.0, 1.0, 1.0)
    }

    pub fn with_units(lambda: f64, mass: f64, well_width: f64, hbar: f64) -> Result<Self> {
        let p = ModelParams {
            lambda,
            mass,
            well_width,
            hbar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("well_width", self.well_width),
            ("hbar", self.hbar),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `ħ t / (m a²)`.
    pub fn scaled_time(&self, t: f64) -> f64 {
        self.hbar * t / (self.mass * self.well_width * self.well_width)
    }

    /// Inverse of [`ModelParams::scaled_time`].
    pub fn physical_time(&self, theta: f64) -> f64 {
        theta * self.mass * self.well_width * self.well_width / self.hbar
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            lambda: 1.0,
            mass: 1.0,
            well_width: 1.0,
            hbar: 1.0,
        }
    }
}

/// The `n`-th infinite-well eigenstate `√(2/a) sin(nπx/a)` used as the
/// initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialState {
    pub mode_index: u32,
}

impl InitialState {
    pub fn new(mode_index: u32) -> Result<Self> {
        if mode_index == 0 {
            return Err(Error::InvalidParameter(
                "mode index of the initial state must be >= 1".into(),
            ));
        }
        Ok(InitialState { mode_index })
    }

    pub fn ground() -> Self {
        InitialState { mode_index: 1 }
    }

    pub fn normalization(&self, params: &ModelParams) -> f64 {
        (2.0 / params.well_width).sqrt()
    }

    /// `ψ⁽ⁿ⁾(x)` for `0 ≤ x ≤ a`, zero elsewhere.
    pub fn value(&self, x: f64, params: &ModelParams) -> f64 {
        if !(0.0..=params.well_width).contains(&x) {
            return 0.0;
        }
        self.normalization(params)
            * (self.mode_index as f64 * PI * x / params.well_width).sin()
    }

    /// `ψ⁽ⁿ⁾` at `u = x/a` in dimensionless form (the `√(2/a)` replaced by `√2`).
    pub(crate) fn scaled_value(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        2f64.sqrt() * (self.mode_index as f64 * PI * u).sin()
    }
}

/// Complex momentum; resonance poles live in the fourth quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMomentum {
    pub re: f64,
    pub im: f64,
}

impl ComplexMomentum {
    pub fn new(re: f64, im: f64) -> Self {
        ComplexMomentum { re, im }
    }

    pub fn as_complex(&self) -> C64 {
        C64::new(self.re, self.im)
    }

    pub fn is_fourth_quadrant(&self) -> bool {
        self.re > 0.0 && self.im < 0.0
    }
}

impl From<C64> for ComplexMomentum {
    fn from(c: C64) -> Self {
        ComplexMomentum { re: c.re, im: c.im }
    }
}

impl From<ComplexMomentum> for C64 {
    fn from(k: ComplexMomentum) -> Self {
        k.as_complex()
    }
}

// ---------------------------------------------------------------------------
// dimensionless kernels (z = k a)

pub(crate) fn denom_z(z: C64, lambda: f64) -> C64 {
    z + lambda * (I * z).exp() * z.sin()
}

pub(crate) fn denom_conj_z(z: C64, lambda: f64) -> C64 {
    z + lambda * (-I * z).exp() * z.sin()
}

pub(crate) fn denom_deriv_z(z: C64, lambda: f64) -> C64 {
    1.0 + lambda * (2.0 * I * z).exp()
}

/// `|D|` evaluated without overflowing deep in the lower half plane.
pub(crate) fn denom_abs_z(z: C64, lambda: f64) -> f64 {
    if z.im < 0.0 {
        let q = (-2.0 * I * z).exp();
        let h = lambda * (1.0 - q) / (2.0 * I);
        // D = e^{2iz} (z q + h), |e^{2iz}| = e^{-2 Im z}
        (z * q + h).norm() * (-2.0 * z.im).exp()
    } else {
        denom_z(z, lambda).norm()
    }
}

/// `W(z) = 4z² / (D(z) D̄(z))`, the analytic continuation of `|A|²`.
pub(crate) fn weight_z(z: C64, lambda: f64) -> C64 {
    if z.im < 0.0 {
        let q = (-2.0 * I * z).exp();
        let h = lambda * (1.0 - q) / (2.0 * I);
        4.0 * z * z * q / ((z * q + h) * (z + h))
    } else {
        4.0 * z * z / (denom_z(z, lambda) * denom_conj_z(z, lambda))
    }
}

/// `∫₀¹ sin(nπu) sin(zu) du`.
pub(crate) fn overlap_z(z: C64, n: u32) -> C64 {
    let npi = n as f64 * PI;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let eps = z - npi;
    if eps.norm() < OVERLAP_TAYLOR_WINDOW {
        // sin(z) = (-1)^n sin(eps); expand sin(eps)/eps to 4th order
        let e2 = eps * eps;
        let sinc = 1.0 - e2 / 6.0 + e2 * e2 / 120.0;
        return 0.5 * sinc / (1.0 + eps / (2.0 * npi));
    }
    sign * npi * z.sin() / (z * z - npi * npi)
}

/// Lower-half-plane form of `I(z) W(z)` with the `x`-dependence split off:
/// `I(z) W(z) sin(zu) = base(z) · [e^{iz(u-1)} - e^{-iz(u+1)}]`.
/// All exponentials involved are bounded for `Im z < 0`.
pub(crate) fn scaled_integrand_base(z: C64, lambda: f64, n: u32) -> C64 {
    let npi = n as f64 * PI;
    let cn = if n % 2 == 0 { npi } else { -npi };
    let q = (-2.0 * I * z).exp();
    let h = lambda * (1.0 - q) / (2.0 * I);
    -cn * z * z * (1.0 - q) / ((z * z - npi * npi) * (z * q + h) * (z + h))
}

// ---------------------------------------------------------------------------
// public operations on physical quantities

fn z_of(k: C64, params: &ModelParams) -> C64 {
    k * params.well_width
}

fn require_positive_momentum(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "real momentum must be > 0, got {k}"
        )));
    }
    Ok(())
}

/// `D(k) = ka + λ e^{ika} sin(ka)`.
pub fn denominator(k: C64, params: &ModelParams) -> C64 {
    denom_z(z_of(k, params), params.lambda)
}

/// `dD/dk = a (1 + λ e^{2ika})`.
pub fn denominator_derivative(k: C64, params: &ModelParams) -> C64 {
    params.well_width * denom_deriv_z(z_of(k, params), params.lambda)
}

/// `D̄(k) = ka + λ e^{-ika} sin(ka)`, the second factor of the weight's denominator.
pub fn conjugate_denominator(k: C64, params: &ModelParams) -> C64 {
    denom_conj_z(z_of(k, params), params.lambda)
}

/// Amplitude of the interior solution `A(k) sin(kx)`.
pub fn coefficient_a(k: f64, params: &ModelParams) -> Result<C64> {
    require_positive_momentum(k)?;
    let z = C64::new(k * params.well_width, 0.0);
    Ok(-2.0 * I * z / denom_z(z, params.lambda))
}

/// Reflection amplitude of the exterior solution; unimodular for real `k`.
pub fn coefficient_b(k: f64, params: &ModelParams) -> Result<C64> {
    require_positive_momentum(k)?;
    let z = C64::new(k * params.well_width, 0.0);
    Ok(-denom_conj_z(z, params.lambda) / denom_z(z, params.lambda))
}

/// `W(k) = -A(-k) A(k)`, with the default pole guard.
pub fn spectral_weight(k: C64, params: &ModelParams) -> Result<C64> {
    spectral_weight_guarded(k, params, POLE_GUARD)
}

pub fn spectral_weight_guarded(k: C64, params: &ModelParams, guard: f64) -> Result<C64> {
    let z = z_of(k, params);
    let d = denom_abs_z(z, params.lambda);
    let dbar = if z.im > 0.0 {
        denom_abs_z(z.conj(), params.lambda)
    } else {
        denom_conj_z(z, params.lambda).norm()
    };
    let smallest = d.min(dbar);
    if smallest < guard {
        return Err(Error::PoleProximity {
            z: format!("{z}"),
            magnitude: smallest,
        });
    }
    Ok(weight_z(z, params.lambda))
}

/// `φ(k) = ∫₀^a ψ⁽ⁿ⁾(x) sin(kx) dx` in closed form.
pub fn initial_overlap(k: C64, state: &InitialState, params: &ModelParams) -> C64 {
    let a = params.well_width;
    (2.0 * a).sqrt() * overlap_z(z_of(k, params), state.mode_index)
}

/// `τ₀ = m (λa)² / (2π³ħ)`.
pub fn characteristic_time(params: &ModelParams) -> Result<f64> {
    if params.lambda <= 0.0 {
        return Err(Error::InvalidParameter(
            "characteristic time needs lambda > 0".into(),
        ));
    }
    let la = params.lambda * params.well_width;
    Ok(params.mass * la * la / (2.0 * PI.powi(3) * params.hbar))
}

/// `τ₀` in units of `m a² / ħ`.
pub(crate) fn scaled_tau0(lambda: f64) -> f64 {
    lambda * lambda / (2.0 * PI.powi(3))
}
