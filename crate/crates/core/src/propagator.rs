//! Wavefunction inside the well and the survival probability.
//!
//! Two representations are implemented. The direct one integrates
//! `(1/2π) ∫₀^∞ e^{-iħk²t/2m} φ(k) W(k) sin(kx) dk` along the real axis.
//! The contour one rotates the path clockwise onto `arg k = -π/4`; the
//! integral along the ray (the background) then carries a Gaussian damping
//! factor, and the poles swept over contribute residue terms.
//!
//! Internally `u = x/a` and `θ = ħt/(ma²)`; a field on `u` is turned into
//! the physical one by dividing by `√a`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    overlap_z, scaled_integrand_base, weight_z, InitialState, ModelParams, C64, I,
};
use crate::poles::{find_poles, residue_coefficient, tail_poles, Pole, SeedStrategy};
use crate::quadrature::{adaptive, panel_nodes, simpson, trapezoid};

/// Intervals of the `x` grid (101 nodes on `[0, a]`).
pub const GRID_INTERVALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Contour,
    PolesOnly,
    BackgroundOnly,
    /// Crank–Nicolson with a Gaussian barrier (see [`crate::tdse`]).
    Tdse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XRule {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    /// Poles always kept in the residue sum.
    pub pole_count: usize,
    /// Extend the sum beyond `pole_count` until the term bound drops below
    /// `pole_cutoff`.
    pub adaptive_poles: bool,
    pub max_poles: usize,
    pub pole_cutoff: f64,
    /// Background quadrature target: `max(abs_tol, rel_tol · max|ψ_bg|)`.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Ray truncated where `e^{-s²θ/2}` falls below `e^{-damping_exponent}`.
    pub damping_exponent: f64,
    pub panel_width: f64,
    pub min_panels: usize,
    pub max_depth: u32,
    pub x_rule: XRule,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            pole_count: 10,
            adaptive_poles: true,
            max_poles: 200_000,
            pole_cutoff: 1e-14,
            abs_tol: 1e-14,
            rel_tol: 1e-9,
            damping_exponent: 37.0,
            panel_width: 0.5,
            min_panels: 64,
            max_depth: 16,
            x_rule: XRule::Trapezoid,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pole_count >= 1
            && self.max_poles >= self.pole_count
            && self.pole_cutoff > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol >= 0.0
            && self.damping_exponent > 0.0
            && self.panel_width > 0.0
            && self.min_panels >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "inconsistent propagator configuration: {self:?}"
            )))
        }
    }
}

/// Settings for the real-axis oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectConfig {
    /// Absolute tolerance on `ψ` (in units of `a^{-1/2}`).
    pub tol: f64,
    /// Length of the first chunk `[0, first_chunk]` in units of `1/a`.
    pub first_chunk: f64,
    /// Give up beyond this momentum (units of `1/a`).
    pub max_momentum: f64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig {
            tol: 1e-8,
            first_chunk: 16.0 * PI,
            max_momentum: 1e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveField {
    pub time: f64,
    pub grid: Vec<f64>,
    pub values: Vec<C64>,
    pub method: Method,
    /// Bound on the pointwise error of `values`.
    pub error_estimate: f64,
}

impl WaveField {
    /// `∫₀^a |ψ|² dx` with the requested rule.
    pub fn norm_sqr(&self, rule: XRule) -> f64 {
        let dens: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        integrate_grid(&dens, self.grid[1] - self.grid[0], rule)
    }
}

fn integrate_grid(values: &[f64], h: f64, rule: XRule) -> f64 {
    match rule {
        XRule::Trapezoid => trapezoid(values, h),
        XRule::Simpson => simpson(values, h),
    }
}

fn unit_grid() -> Vec<f64> {
    (0..=GRID_INTERVALS)
        .map(|j| j as f64 / GRID_INTERVALS as f64)
        .collect()
}

fn check_position(x: f64, params: &ModelParams) -> Result<f64> {
    let a = params.well_width;
    if !(0.0..=a).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "x = {x} lies outside the well [0, {a}]"
        )));
    }
    Ok(x / a)
}

fn check_time(t: f64, strict: bool) -> Result<()> {
    if !t.is_finite() || t < 0.0 || (strict && t == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be {} and finite, got {t}",
            if strict { "> 0" } else { ">= 0" }
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// residue sum

/// Poles and residue coefficients for one `(λ, ψ⁽ⁿ⁾)` pair, extended on
/// demand with uncertified tail poles.
#[derive(Debug, Clone)]
pub struct ResonanceExpansion {
    lambda: f64,
    mode: u32,
    certified: Vec<Pole>,
    z: Vec<C64>,
    coef: Vec<C64>,
}

impl ResonanceExpansion {
    pub fn new(params: &ModelParams, state: &InitialState, cfg: &PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        let certified = find_poles(params, cfg.pole_count, SeedStrategy::Deflated)?;
        let mut out = ResonanceExpansion {
            lambda: params.lambda,
            mode: state.mode_index,
            certified: Vec::new(),
            z: Vec::new(),
            coef: Vec::new(),
        };
        out.push(&certified, params)?;
        out.certified = certified;
        Ok(out)
    }

    fn push(&mut self, poles: &[Pole], params: &ModelParams) -> Result<()> {
        for p in poles {
            let z = p.scaled_momentum(params);
            // only poles between the real axis and the rotated ray are swept
            if z.re + z.im <= 0.0 {
                continue;
            }
            self.z.push(z);
            self.coef.push(residue_coefficient(z, self.lambda, self.mode)?);
        }
        Ok(())
    }

    pub fn certified_poles(&self) -> &[Pole] {
        &self.certified
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn bound(&self, i: usize, theta: f64) -> f64 {
        let z = self.z[i];
        self.coef[i].norm() * z.im.abs().cosh() * (z.re * z.im * theta).exp()
    }

    /// Make sure enough poles are stored for every `θ ≥ theta_min`.
    pub fn prepare(&mut self, theta_min: f64, cfg: &PropagatorConfig, params: &ModelParams) -> Result<()> {
        if !cfg.adaptive_poles {
            return Ok(());
        }
        while self.z.len() < cfg.max_poles {
            if let Some(last) = self.z.len().checked_sub(1) {
                if self.bound(last, theta_min) < cfg.pole_cutoff {
                    break;
                }
            }
            let first = self.certified.len().max(self.z.len()) as u32 + 1;
            let want = (self.z.len() / 2).clamp(64, 20_000);
            let last_n = (first as usize + want - 1).min(cfg.max_poles) as u32;
            if last_n < first {
                break;
            }
            let more = tail_poles(params, first, last_n)?;
            self.push(&more, params)?;
        }
        Ok(())
    }

    /// Number of poles used at `theta` and a bound on the neglected tail.
    pub fn truncation(&self, theta: f64, cfg: &PropagatorConfig) -> (usize, f64) {
        let floor = cfg.pole_count.min(self.z.len());
        if !cfg.adaptive_poles {
            return (floor, self.tail_estimate(floor, theta));
        }
        let mut n = floor;
        while n < self.z.len() && self.bound(n, theta) >= cfg.pole_cutoff {
            n += 1;
        }
        (n, self.tail_estimate(n, theta))
    }

    /// Sum of term bounds beyond `n`, using the stored poles and the
    /// asymptotic pole positions past them.
    fn tail_estimate(&self, n: usize, theta: f64) -> f64 {
        let mut sum = 0.0;
        for i in n..self.z.len() {
            let b = self.bound(i, theta);
            sum += b;
            if b < 1e-6 * sum {
                return sum;
            }
        }
        if self.z.is_empty() {
            return 0.0;
        }
        // asymptotic continuation with the last coefficient magnitude
        let last = *self.coef.last().unwrap();
        let mut m = self.z.len() as f64;
        for _ in 0..100_000 {
            m += 1.0;
            let im = -0.5 * (2.0 * m * PI / self.lambda).ln();
            let re = m * PI - 0.25 * PI;
            let b = last.norm() * im.abs().cosh() * (re * im * theta).exp();
            sum += b;
            if b < 1e-6 * sum || b == 0.0 {
                break;
            }
        }
        sum
    }

    /// `Σ coef_n e^{-iz_n²θ/2} sin(z_n u_j)` on the uniform unit grid.
    fn field(&self, theta: f64, count: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); GRID_INTERVALS + 1];
        let h = 1.0 / GRID_INTERVALS as f64;
        for i in 0..count.min(self.z.len()) {
            let z = self.z[i];
            let amp = self.coef[i] * (-0.5 * I * z * z * theta).exp();
            if amp.norm() == 0.0 {
                continue;
            }
            let step_p = (I * z * h).exp();
            let step_m = (-I * z * h).exp();
            let mut ep = C64::new(1.0, 0.0);
            let mut em = C64::new(1.0, 0.0);
            for (j, o) in out.iter_mut().enumerate() {
                if j > 0 {
                    ep *= step_p;
                    em *= step_m;
                }
                *o += amp * (ep - em) / (2.0 * I);
            }
        }
        out[0] = C64::new(0.0, 0.0);
        out
    }

    fn at(&self, u: f64, theta: f64, count: usize) -> C64 {
        (0..count.min(self.z.len()))
            .map(|i| {
                let z = self.z[i];
                self.coef[i] * (-0.5 * I * z * z * theta).exp() * (z * u).sin()
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// background along the rotated ray

fn rotation() -> C64 {
    C64::from_polar(1.0, -0.25 * PI)
}

fn background_prefactor() -> C64 {
    rotation() * (2f64.sqrt() / (2.0 * PI))
}

/// Kernel `e^{iz(u-1)} - e^{-iz(u+1)}` on the uniform grid, built by
/// multiplicative recurrences that only ever shrink (`Im z < 0`).
fn kernel_on_grid(z: C64, out: &mut [C64]) {
    let n = out.len() - 1;
    let h = 1.0 / n as f64;
    let step = (-I * z * h).exp();
    let mut e = C64::new(1.0, 0.0);
    for j in (0..=n).rev() {
        out[j] = e;
        e *= step;
    }
    let mut e = (-I * z).exp();
    for o in out.iter_mut() {
        *o -= e;
        e *= step;
    }
}

struct RayIntegrand {
    lambda: f64,
    mode: u32,
    theta: f64,
}

impl RayIntegrand {
    fn weight(&self, s: f64) -> C64 {
        let z = rotation() * s;
        scaled_integrand_base(z, self.lambda, self.mode) * (-0.5 * s * s * self.theta).exp()
    }
}

struct PanelResult {
    a: f64,
    b: f64,
    value: Vec<C64>,
    error: f64,
}

fn ray_panel(f: &RayIntegrand, a: f64, b: f64, kernel: &mut [C64]) -> PanelResult {
    let m = kernel.len();
    let mut k = vec![C64::new(0.0, 0.0); m];
    let mut g = vec![C64::new(0.0, 0.0); m];
    for node in panel_nodes(a, b) {
        let w = f.weight(node.x);
        if w.norm() == 0.0 {
            continue;
        }
        kernel_on_grid(rotation() * node.x, kernel);
        for j in 0..m {
            let v = w * kernel[j];
            k[j] += v * node.kronrod;
            g[j] += v * node.gauss;
        }
    }
    let error = k
        .iter()
        .zip(&g)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    PanelResult { a, b, value: k, error }
}

fn refine_ray(
    f: &RayIntegrand,
    p: PanelResult,
    density: f64,
    depth: u32,
    kernel: &mut [C64],
    acc: &mut (Vec<C64>, f64),
) {
    if p.error <= density * (p.b - p.a) || depth == 0 {
        for (o, v) in acc.0.iter_mut().zip(&p.value) {
            *o += v;
        }
        acc.1 += p.error;
        return;
    }
    let m = 0.5 * (p.a + p.b);
    let left = ray_panel(f, p.a, m, kernel);
    let right = ray_panel(f, m, p.b, kernel);
    refine_ray(f, left, density, depth - 1, kernel, acc);
    refine_ray(f, right, density, depth - 1, kernel, acc);
}

/// Background field on the unit grid and its quadrature error bound
/// (both in scaled units).
fn background_field(lambda: f64, mode: u32, theta: f64, cfg: &PropagatorConfig) -> (Vec<C64>, f64) {
    let f = RayIntegrand {
        lambda,
        mode,
        theta,
    };
    let s_max = (2.0 * cfg.damping_exponent / theta).sqrt();
    let panels = ((s_max / cfg.panel_width).ceil() as usize).max(cfg.min_panels);
    let w = s_max / panels as f64;
    let mut kernel = vec![C64::new(0.0, 0.0); GRID_INTERVALS + 1];
    let first: Vec<PanelResult> = (0..panels)
        .map(|i| {
            let a = w * i as f64;
            let b = if i + 1 == panels { s_max } else { a + w };
            ray_panel(&f, a, b, &mut kernel)
        })
        .collect();
    let mut estimate = vec![C64::new(0.0, 0.0); GRID_INTERVALS + 1];
    for p in &first {
        for (e, v) in estimate.iter_mut().zip(&p.value) {
            *e += v;
        }
    }
    let scale = estimate.iter().map(|v| v.norm()).fold(0.0, f64::max) * background_prefactor().norm();
    let tol = cfg.abs_tol.max(cfg.rel_tol * scale) / background_prefactor().norm();
    let density = tol / s_max;
    let mut acc = (vec![C64::new(0.0, 0.0); GRID_INTERVALS + 1], 0.0);
    for p in first {
        refine_ray(&f, p, density, cfg.max_depth, &mut kernel, &mut acc);
    }
    let pre = background_prefactor();
    let mut values: Vec<C64> = acc.0.into_iter().map(|v| v * pre).collect();
    values[0] = C64::new(0.0, 0.0);
    (values, acc.1 * pre.norm())
}

fn background_point(lambda: f64, mode: u32, u: f64, theta: f64, cfg: &PropagatorConfig) -> (C64, f64) {
    let f = RayIntegrand {
        lambda,
        mode,
        theta,
    };
    let s_max = (2.0 * cfg.damping_exponent / theta).sqrt();
    let panels = ((s_max / cfg.panel_width).ceil() as usize).max(cfg.min_panels);
    let g = |s: f64| {
        let z = rotation() * s;
        f.weight(s) * ((I * z * (u - 1.0)).exp() - (-I * z * (u + 1.0)).exp())
    };
    let rough = adaptive(&g, 0.0, s_max, f64::INFINITY, panels, 0);
    let tol = cfg.abs_tol.max(cfg.rel_tol * rough.value.norm() * background_prefactor().norm())
        / background_prefactor().norm();
    let r = adaptive(&g, 0.0, s_max, tol, panels, cfg.max_depth);
    let pre = background_prefactor();
    (r.value * pre, r.error * pre.norm())
}

/// Background term of the rotated-contour representation at one point.
pub fn background_wave(
    x: f64,
    t: f64,
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<C64> {
    params.validate()?;
    check_time(t, true)?;
    let u = check_position(x, params)?;
    if u == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let theta = params.scaled_time(t);
    let (v, _) = background_point(params.lambda, state.mode_index, u, theta, cfg);
    Ok(v / params.well_width.sqrt())
}

/// Residue sum `Σ C(k_n, x) e^{-iħk_n²t/2m}` over the first `pole_count`
/// poles (no adaptive extension).
pub fn pole_wave(
    x: f64,
    t: f64,
    state: &InitialState,
    params: &ModelParams,
    pole_count: usize,
) -> Result<C64> {
    check_time(t, false)?;
    let u = check_position(x, params)?;
    let cfg = PropagatorConfig {
        pole_count,
        max_poles: pole_count,
        adaptive_poles: false,
        ..Default::default()
    };
    let exp = ResonanceExpansion::new(params, state, &cfg)?;
    Ok(exp.at(u, params.scaled_time(t), pole_count) / params.well_width.sqrt())
}

/// Background plus residue sum at one point, with the adaptive pole count.
pub fn wavefunction_contour(
    x: f64,
    t: f64,
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<C64> {
    check_time(t, true)?;
    let u = check_position(x, params)?;
    let theta = params.scaled_time(t);
    let mut exp = ResonanceExpansion::new(params, state, cfg)?;
    exp.prepare(theta, cfg, params)?;
    let (count, _) = exp.truncation(theta, cfg);
    let (bg, _) = background_point(params.lambda, state.mode_index, u, theta, cfg);
    Ok((bg + exp.at(u, theta, count)) / params.well_width.sqrt())
}

/// Real-axis integral, the oracle for the contour representation.
pub fn wavefunction_direct(
    x: f64,
    t: f64,
    state: &InitialState,
    params: &ModelParams,
    cfg: &DirectConfig,
) -> Result<C64> {
    params.validate()?;
    check_time(t, false)?;
    let u = check_position(x, params)?;
    if u == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let theta = params.scaled_time(t);
    let lambda = params.lambda;
    let n = state.mode_index;
    let pre = 2f64.sqrt() / (2.0 * PI);
    let g = |z: f64| {
        let zc = C64::new(z, 0.0);
        (-0.5 * I * z * z * theta).exp() * overlap_z(zc, n) * weight_z(zc, lambda) * (z * u).sin()
    };
    // tolerance in scaled units
    let tol = cfg.tol * params.well_width.sqrt() / pre;
    let mut total = C64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut lo = 0.0;
    let mut hi = cfg.first_chunk;
    let mut small_in_a_row = 0;
    while small_in_a_row < 2 {
        if hi > cfg.max_momentum {
            return Err(Error::NonConvergence {
                estimate: total.norm().max(error),
                tolerance: cfg.tol,
                context: format!("real-axis integral not settled by k a = {lo}"),
            });
        }
        let max_width = PI / (8.0 * (hi * theta + 2.0));
        let panels = ((hi - lo) / max_width).ceil() as usize;
        let r = adaptive(&g, lo, hi, tol / 16.0, panels, 12);
        total += r.value;
        error += r.error;
        if r.value.norm() < tol / 4.0 {
            small_in_a_row += 1;
        } else {
            small_in_a_row = 0;
        }
        lo = hi;
        hi *= 2.0;
    }
    if error > tol {
        return Err(Error::NonConvergence {
            estimate: error * pre,
            tolerance: cfg.tol,
            context: "real-axis panels".into(),
        });
    }
    Ok(total * pre / params.well_width.sqrt())
}

// ---------------------------------------------------------------------------
// survival probability

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub p_total: f64,
    pub p_bg: f64,
    pub p_poles: f64,
    pub p_interf: f64,
    /// Error bound on `p_total` from quadrature and pole truncation.
    pub err_est: f64,
    pub poles_used: usize,
}

/// Fields of both parts on the shared grid at scaled time `theta`.
pub struct SplitField {
    pub background: Vec<C64>,
    pub poles: Vec<C64>,
    /// Pointwise error bound of `background + poles` (scaled units).
    pub error: f64,
    pub poles_used: usize,
}

fn split_field(exp: &ResonanceExpansion, theta: f64, cfg: &PropagatorConfig) -> SplitField {
    let (background, bg_err) = background_field(exp.lambda, exp.mode, theta, cfg);
    let (count, tail) = exp.truncation(theta, cfg);
    let poles = exp.field(theta, count);
    SplitField {
        background,
        poles,
        error: bg_err + tail,
        poles_used: count,
    }
}

fn decompose(split: &SplitField, rule: XRule) -> Decomposition {
    let h = 1.0 / GRID_INTERVALS as f64;
    let m = split.background.len();
    let mut tot = Vec::with_capacity(m);
    let mut bg = Vec::with_capacity(m);
    let mut po = Vec::with_capacity(m);
    let mut cross = Vec::with_capacity(m);
    for (b, p) in split.background.iter().zip(&split.poles) {
        tot.push((b + p).norm_sqr());
        bg.push(b.norm_sqr());
        po.push(p.norm_sqr());
        cross.push(2.0 * (b.conj() * p).re);
    }
    let p_total = integrate_grid(&tot, h, rule);
    let e = split.error;
    Decomposition {
        p_total,
        p_bg: integrate_grid(&bg, h, rule),
        p_poles: integrate_grid(&po, h, rule),
        p_interf: integrate_grid(&cross, h, rule),
        err_est: 2.0 * p_total.max(0.0).sqrt() * e + e * e,
        poles_used: split.poles_used,
    }
}

/// `P(t)`; at `t = 0` the closed-form initial state is used.
pub fn survival(t: f64, state: &InitialState, params: &ModelParams, cfg: &PropagatorConfig) -> Result<f64> {
    check_time(t, false)?;
    if t == 0.0 {
        let field = WaveField {
            time: 0.0,
            grid: unit_grid(),
            values: unit_grid()
                .iter()
                .map(|&u| C64::new(state.scaled_value(u), 0.0))
                .collect(),
            method: Method::Direct,
            error_estimate: 0.0,
        };
        return Ok(field.norm_sqr(cfg.x_rule));
    }
    Ok(survival_decomposition(t, state, params, cfg)?.p_total)
}

pub fn survival_decomposition(
    t: f64,
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<Decomposition> {
    check_time(t, true)?;
    let theta = params.scaled_time(t);
    let mut exp = ResonanceExpansion::new(params, state, cfg)?;
    exp.prepare(theta, cfg, params)?;
    Ok(decompose(&split_field(&exp, theta, cfg), cfg.x_rule))
}

/// Wavefunction on the 101-node grid by the contour representation, or one
/// of its two parts.
pub fn wave_field(
    t: f64,
    method: Method,
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<WaveField> {
    check_time(t, true)?;
    let theta = params.scaled_time(t);
    let sa = params.well_width.sqrt();
    let grid: Vec<f64> = unit_grid().iter().map(|u| u * params.well_width).collect();
    let values: Vec<C64>;
    let mut error = 0.0;
    match method {
        Method::Direct => {
            let dc = DirectConfig::default();
            values = grid
                .par_iter()
                .map(|&x| wavefunction_direct(x, t, state, params, &dc))
                .collect::<Result<Vec<_>>>()?;
            error = dc.tol;
        }
        Method::Tdse => {
            return Err(Error::InvalidParameter(
                "TDSE fields come from tdse::evolve, not the Green's-function grid".into(),
            ))
        }
        _ => {
            let mut exp = ResonanceExpansion::new(params, state, cfg)?;
            exp.prepare(theta, cfg, params)?;
            let split = split_field(&exp, theta, cfg);
            values = match method {
                Method::Contour => {
                    error = split.error / sa;
                    split
                        .background
                        .iter()
                        .zip(&split.poles)
                        .map(|(b, p)| (b + p) / sa)
                        .collect()
                }
                Method::PolesOnly => split.poles.iter().map(|p| p / sa).collect(),
                _ => split.background.iter().map(|b| b / sa).collect(),
            };
        }
    }
    Ok(WaveField {
        time: t,
        grid,
        values,
        method,
        error_estimate: error,
    })
}

/// `(m a²/ħ)³ / (λ⁴ t³)`, the order of magnitude of the late background.
pub fn background_asymptote(t: f64, params: &ModelParams) -> Result<f64> {
    check_time(t, true)?;
    if params.lambda <= 0.0 {
        return Err(Error::InvalidParameter("asymptote needs lambda > 0".into()));
    }
    Ok(1.0 / (params.lambda.powi(4) * params.scaled_time(t).powi(3)))
}

/// `10 (ħ/Γ₁) ln λ`, an order-of-magnitude estimate of the turnover to the
/// power law.
pub fn breakdown_estimate(params: &ModelParams, pole_1: &Pole) -> Result<f64> {
    if params.lambda <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "the breakdown estimate 10 (hbar/Gamma_1) ln(lambda) needs lambda > 1, got {}",
            params.lambda
        )));
    }
    Ok(10.0 * params.hbar / pole_1.width * params.lambda.ln())
}

// ---------------------------------------------------------------------------
// time series

/// `count` log-spaced times from `t_min` to `t_max` inclusive.
pub fn log_time_grid(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min && count >= 2) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < t_min < t_max and count >= 2, got [{t_min}, {t_max}] x {count}"
        )));
    }
    let (l0, l1) = (t_min.ln(), t_max.ln());
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                t_max
            } else {
                (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub params: ModelParams,
    pub state: InitialState,
    pub tau0: f64,
    pub config: PropagatorConfig,
    pub times: Vec<f64>,
    pub t_over_tau0: Vec<f64>,
    pub p_total: Vec<f64>,
    pub p_bg: Vec<f64>,
    pub p_poles: Vec<f64>,
    pub p_interf: Vec<f64>,
    pub err_est: Vec<f64>,
    pub poles_used: Vec<usize>,
}

/// Survival and its decomposition at every time (all `> 0`, strictly
/// increasing). Times are evaluated in parallel on the current rayon pool;
/// each row depends only on its own time, so the result does not depend on
/// the number of threads.
pub fn survival_series(
    times: &[f64],
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<SurvivalSeries> {
    params.validate()?;
    cfg.validate()?;
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if times[0] <= 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "times must be positive and strictly increasing".into(),
        ));
    }
    let tau0 = crate::model::characteristic_time(params)?;
    let mut exp = ResonanceExpansion::new(params, state, cfg)?;
    exp.prepare(params.scaled_time(times[0]), cfg, params)?;
    let rows: Vec<Decomposition> = times
        .par_iter()
        .map(|&t| decompose(&split_field(&exp, params.scaled_time(t), cfg), cfg.x_rule))
        .collect();
    Ok(SurvivalSeries {
        params: *params,
        state: *state,
        tau0,
        config: *cfg,
        times: times.to_vec(),
        t_over_tau0: times.iter().map(|t| t / tau0).collect(),
        p_total: rows.iter().map(|r| r.p_total).collect(),
        p_bg: rows.iter().map(|r| r.p_bg).collect(),
        p_poles: rows.iter().map(|r| r.p_poles).collect(),
        p_interf: rows.iter().map(|r| r.p_interf).collect(),
        err_est: rows.iter().map(|r| r.err_est).collect(),
        poles_used: rows.iter().map(|r| r.poles_used).collect(),
    })
}

/// Series on `count` log-spaced times between `t_min·τ₀` and `t_max·τ₀`.
pub fn survival_series_tau0(
    t_min_tau0: f64,
    t_max_tau0: f64,
    count: usize,
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<SurvivalSeries> {
    let tau0 = crate::model::characteristic_time(params)?;
    let times = log_time_grid(t_min_tau0 * tau0, t_max_tau0 * tau0, count)?;
    survival_series(&times, state, params, cfg)
}

impl SurvivalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "t_over_tau0",
            "p_total",
            "p_bg",
            "p_poles",
            "p_interf",
            "err_est",
        ])?;
        for i in 0..self.len() {
            w.write_record(
                [
                    self.times[i],
                    self.t_over_tau0[i],
                    self.p_total[i],
                    self.p_bg[i],
                    self.p_poles[i],
                    self.p_interf[i],
                    self.err_est[i],
                ]
                .iter()
                .map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Series restricted to rows whose index satisfies `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> SurvivalSeries {
        let pick = |v: &Vec<f64>| -> Vec<f64> {
            v.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, x)| *x).collect()
        };
        SurvivalSeries {
            params: self.params,
            state: self.state,
            tau0: self.tau0,
            config: self.config,
            times: pick(&self.times),
            t_over_tau0: pick(&self.t_over_tau0),
            p_total: pick(&self.p_total),
            p_bg: pick(&self.p_bg),
            p_poles: pick(&self.p_poles),
            p_interf: pick(&self.p_interf),
            err_est: pick(&self.err_est),
            poles_used: self
                .poles_used
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, x)| *x)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scaled_tau0;

    fn p(lambda: f64) -> ModelParams {
        ModelParams::new(lambda).unwrap()
    }

    #[test]
    fn kernel_recurrence_matches_direct() {
        let z = C64::new(13.0, -4.0);
        let mut k = vec![C64::new(0.0, 0.0); GRID_INTERVALS + 1];
        kernel_on_grid(z, &mut k);
        for (j, v) in k.iter().enumerate() {
            let u = j as f64 / GRID_INTERVALS as f64;
            let d = (I * z * (u - 1.0)).exp() - (-I * z * (u + 1.0)).exp();
            assert!((v - d).norm() < 1e-13, "{j}");
        }
    }

    #[test]
    fn initial_state_is_normalized() {
        let cfg = PropagatorConfig::default();
        for n in 1..4 {
            let s = InitialState::new(n).unwrap();
            assert!((survival(0.0, &s, &p(3.0), &cfg).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn contour_matches_known_survival() {
        let params = p(3.6);
        let cfg = PropagatorConfig::default();
        let s = InitialState::ground();
        let tau0 = scaled_tau0(3.6);
        let d = survival_decomposition(tau0, &s, &params, &cfg).unwrap();
        assert!((d.p_total - 0.875).abs() < 2e-3, "{}", d.p_total);
        let sum = d.p_bg + d.p_poles + d.p_interf;
        assert!((sum - d.p_total).abs() < 1e-12);
    }

    #[test]
    fn contour_point_agrees_with_field() {
        let params = p(1.0);
        let cfg = PropagatorConfig::default();
        let s = InitialState::ground();
        let t = 3.0 * scaled_tau0(1.0);
        let f = wave_field(t, Method::Contour, &s, &params, &cfg).unwrap();
        let v = wavefunction_contour(0.37, t, &s, &params, &cfg).unwrap();
        let b = background_wave(0.37, t, &s, &params, &cfg).unwrap();
        let f_bg = wave_field(t, Method::BackgroundOnly, &s, &params, &cfg).unwrap();
        assert!((b - f_bg.values[37]).norm() < 1e-9);
        assert!((v - f.values[37]).norm() < 1e-9);
        assert_eq!(f.values[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn direct_reproduces_initial_state() {
        let v = wavefunction_direct(0.5, 0.0, &InitialState::ground(), &p(8.0), &DirectConfig {
            tol: 1e-6,
            ..Default::default()
        })
        .unwrap();
        assert!((v - 2f64.sqrt()).norm() < 1e-4, "{v}");
    }

    #[test]
    fn asymptote_scaling() {
        let a = background_asymptote(2.0, &p(1.0)).unwrap();
        let b = background_asymptote(1.0, &p(1.0)).unwrap();
        assert!((a / b - 0.125).abs() < 1e-15);
        let c = background_asymptote(1.0, &p(2.0)).unwrap();
        assert!((c / b - 1.0 / 16.0).abs() < 1e-15);
        assert!(background_asymptote(0.0, &p(1.0)).is_err());
    }

    #[test]
    fn breakdown_estimate_domain() {
        let e = std::f64::consts::E;
        let params = p(e);
        let pole = find_poles(&params, 1, SeedStrategy::Deflated).unwrap()[0];
        let b = breakdown_estimate(&params, &pole).unwrap();
        assert!((b - 10.0 / pole.width).abs() < 1e-12 * b);
        assert!(breakdown_estimate(&p(1.0), &pole).is_err());
    }

    #[test]
    fn time_grid_is_log_spaced() {
        let g = log_time_grid(1e-3, 1e3, 7).unwrap();
        assert_eq!(g.len(), 7);
        for (i, t) in g.iter().enumerate() {
            assert!((t.log10() - (-3.0 + i as f64)).abs() < 1e-12);
        }
        assert!(log_time_grid(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let cfg = PropagatorConfig::default();
        let s = InitialState::ground();
        assert!(background_wave(0.5, 0.0, &s, &p(1.0), &cfg).is_err());
        assert!(background_wave(1.5, 1.0, &s, &p(1.0), &cfg).is_err());
        assert!(survival_series(&[], &s, &p(1.0), &cfg).is_err());
        assert!(survival_series(&[2.0, 1.0], &s, &p(1.0), &cfg).is_err());
    }
}
