//! Resonance poles: zeros of `D(k) = ka + λ e^{ika} sin(ka)` in the fourth
//! quadrant, their residues and the derived widths, lifetimes and Q-values.
//!
//! Every zero satisfies `e^{2iz} = 1 - 2iz/λ` (with `z = ka`), so the zeros
//! are labelled by the branch of the logarithm:
//! `z_n = nπ + Log(1 - 2iz_n/λ) / (2i)`, which places the `n`-th pole in the
//! strip `nπ - π/2 < Re z_n < nπ`. The branch label is what `index` means.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    denom_conj_z, denom_deriv_z, denom_z, overlap_z, scaled_tau0, ComplexMomentum, InitialState,
    ModelParams, C64, I,
};
use crate::quadrature::trapezoid;

/// Grid used for `x`-integrals inside the well: 101 nodes on `[0, a]`.
pub const WELL_GRID_POINTS: usize = 101;

/// Below this Q the resonance is flagged as poorly formed.
pub const POORLY_FORMED_Q: f64 = 0.5;

const MAX_NEWTON_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedStrategy {
    /// `k_n a = nπ λ/(λ+1) - 0.5i/(1+λ)`, falling back to the branch
    /// fixed point and then a grid scan.
    #[default]
    Deflated,
    /// Fixed-point iteration of the logarithmic branch equation.
    BranchFixedPoint,
    /// Minimum of `|D|` on a grid over the branch strip.
    GridScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub index: u32,
    pub momentum: ComplexMomentum,
    /// Complex energy `ħ²k²/(2m)`.
    pub energy_re: f64,
    pub energy_im: f64,
    /// `Γ = -2 Im E`.
    pub width: f64,
    /// `ħ/Γ`.
    pub lifetime: f64,
    pub lifetime_over_tau0: f64,
    pub q_value: f64,
    /// `|D(k_n)|` reached by the polishing step.
    pub residual: f64,
    pub poorly_formed: bool,
}

impl Pole {
    fn from_scaled(index: u32, z: C64, residual: f64, params: &ModelParams) -> Self {
        let a = params.well_width;
        let k = z / a;
        let e = params.hbar * params.hbar * k * k / (2.0 * params.mass);
        let width = -2.0 * e.im;
        let q = -e.re / (2.0 * e.im);
        let lifetime = params.hbar / width;
        // lifetime / τ₀ is unit-free: -1/Im(z²) over λ²/(2π³)
        let over_tau0 = if params.lambda > 0.0 {
            -1.0 / (z * z).im / scaled_tau0(params.lambda)
        } else {
            f64::NAN
        };
        Pole {
            index,
            momentum: k.into(),
            energy_re: e.re,
            energy_im: e.im,
            width,
            lifetime,
            lifetime_over_tau0: over_tau0,
            q_value: q,
            residual,
            poorly_formed: q < POORLY_FORMED_Q,
        }
    }

    /// `k_n a`.
    pub fn scaled_momentum(&self, params: &ModelParams) -> C64 {
        self.momentum.as_complex() * params.well_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleWeight {
    pub index: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    pub raw: f64,
    pub over_tau0: f64,
}

/// Residual target for Newton polishing: `1e-12`, or the rounding floor
/// `|D'(z)| · ulp(z)` where that is larger (high poles only).
pub(crate) fn residual_tolerance(z: C64, lambda: f64) -> f64 {
    1e-12_f64.max(16.0 * f64::EPSILON * z.norm() * denom_deriv_z(z, lambda).norm())
}

fn in_branch_strip(z: C64, n: u32) -> bool {
    let npi = n as f64 * PI;
    z.im < 0.0 && z.re > npi - 0.5 * PI && z.re < npi
}

fn newton(mut z: C64, lambda: f64) -> Option<(C64, f64)> {
    let mut d = denom_z(z, lambda);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let dp = denom_deriv_z(z, lambda);
        if dp.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let step = d / dp;
        let mut scale = 1.0;
        let mut next = z - step;
        let mut dn = denom_z(next, lambda);
        // damped step: never accept an increase of |D|
        for _ in 0..30 {
            if dn.norm() <= d.norm() || !(dn.norm().is_finite()) && scale < 1e-8 {
                break;
            }
            scale *= 0.5;
            next = z - step * scale;
            dn = denom_z(next, lambda);
        }
        let moved = (next - z).norm();
        z = next;
        d = dn;
        if moved <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            break;
        }
    }
    let r = d.norm();
    if r.is_finite() && r < residual_tolerance(z, lambda) {
        Some((z, r))
    } else {
        None
    }
}

fn deflated_seed(n: u32, lambda: f64) -> C64 {
    C64::new(
        n as f64 * PI * lambda / (lambda + 1.0),
        -0.5 / (1.0 + lambda),
    )
}

/// Fixed point of `z = nπ + Log(1 - 2iz/λ)/(2i)`; the map is a contraction
/// away from `z = 0`.
fn branch_seed(n: u32, lambda: f64) -> C64 {
    let npi = n as f64 * PI;
    let mut z = C64::new(npi - 0.25 * PI, -0.5 * (2.0 * npi / lambda + 1.0).ln());
    for _ in 0..200 {
        let next = npi + (1.0 - 2.0 * I * z / lambda).ln() / (2.0 * I);
        let done = (next - z).norm() < 1e-14 * npi;
        z = next;
        if done {
            break;
        }
    }
    z
}

fn grid_scan_seed(n: u32, lambda: f64) -> C64 {
    let npi = n as f64 * PI;
    let depth = (2.0 * npi / lambda + 1.0).ln() + 2.0;
    let (nr, ni) = (64, 64);
    let mut best = (f64::INFINITY, C64::new(npi - 0.25 * PI, -0.5));
    for i in 0..=nr {
        for j in 1..=ni {
            let z = C64::new(
                npi - 0.5 * PI + 0.5 * PI * i as f64 / nr as f64,
                -depth * j as f64 / ni as f64,
            );
            let v = denom_z(z, lambda).norm();
            if v < best.0 {
                best = (v, z);
            }
        }
    }
    best.1
}

/// Locate and polish the `n`-th pole (dimensionless `z = ka`).
pub(crate) fn locate_scaled(n: u32, lambda: f64, strategy: SeedStrategy) -> Result<(C64, f64)> {
    let order: &[SeedStrategy] = match strategy {
        SeedStrategy::Deflated => &[
            SeedStrategy::Deflated,
            SeedStrategy::BranchFixedPoint,
            SeedStrategy::GridScan,
        ],
        SeedStrategy::BranchFixedPoint => {
            &[SeedStrategy::BranchFixedPoint, SeedStrategy::GridScan]
        }
        SeedStrategy::GridScan => &[SeedStrategy::GridScan],
    };
    for s in order {
        let seed = match s {
            SeedStrategy::Deflated => deflated_seed(n, lambda),
            SeedStrategy::BranchFixedPoint => branch_seed(n, lambda),
            SeedStrategy::GridScan => grid_scan_seed(n, lambda),
        };
        if let Some((z, r)) = newton(seed, lambda) {
            if in_branch_strip(z, n) {
                return Ok((z, r));
            }
        }
    }
    Err(Error::RootFinding(format!(
        "no zero of D found in branch {n} for lambda = {lambda}"
    )))
}

/// Axis-aligned rectangle in the dimensionless `z = ka` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

fn arg_increment(f: &impl Fn(C64) -> C64, a: C64, b: C64, fa: C64, fb: C64, depth: u32) -> f64 {
    let delta = (fb / fa).arg();
    if delta.abs() < PI / 4.0 || depth == 0 {
        return delta;
    }
    let m = 0.5 * (a + b);
    let fm = f(m);
    arg_increment(f, a, m, fa, fm, depth - 1) + arg_increment(f, m, b, fm, fb, depth - 1)
}

/// Winding number of `D` around the boundary of `rect` (counter-clockwise),
/// i.e. the number of zeros inside, counted with multiplicity.
pub fn argument_principle_count(lambda: f64, rect: &Rectangle) -> Result<i64> {
    let f = |z: C64| denom_z(z, lambda);
    let corners = [
        C64::new(rect.re_min, rect.im_min),
        C64::new(rect.re_max, rect.im_min),
        C64::new(rect.re_max, rect.im_max),
        C64::new(rect.re_min, rect.im_max),
    ];
    let mut total = 0.0;
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let steps = ((b - a).norm() / 0.05).ceil().max(1.0) as usize;
        let mut prev = a;
        let mut fprev = f(a);
        for s in 1..=steps {
            let next = a + (b - a) * (s as f64 / steps as f64);
            let fnext = f(next);
            if fnext.norm() == 0.0 || !fnext.is_finite() {
                return Err(Error::Certification(format!(
                    "D vanishes or overflows on the contour near {next}"
                )));
            }
            total += arg_increment(&f, prev, next, fprev, fnext, 40);
            prev = next;
            fprev = fnext;
        }
    }
    let winding = total / (2.0 * PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.1 {
        return Err(Error::Certification(format!(
            "winding number {winding} is not close to an integer"
        )));
    }
    Ok(rounded as i64)
}

/// Rectangle that contains pole `n` and excludes the neighbouring branches.
pub fn isolation_rectangle(n: u32, z: C64) -> Rectangle {
    let npi = n as f64 * PI;
    Rectangle {
        re_min: npi - 0.75 * PI,
        re_max: npi + 0.25 * PI,
        im_min: 2.0 * z.im - 1.0,
        im_max: 0.5,
    }
}

/// The first `n_max` resonance poles, sorted by `Re k`, each polished to
/// `|D| < 1e-12` and certified by the argument principle.
pub fn find_poles(params: &ModelParams, n_max: usize, seed: SeedStrategy) -> Result<Vec<Pole>> {
    params.validate()?;
    if params.lambda <= 0.0 {
        return Err(Error::InvalidParameter(
            "resonance poles need lambda > 0".into(),
        ));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let lambda = params.lambda;
    let mut scaled = Vec::with_capacity(n_max);
    for n in 1..=n_max as u32 {
        let (z, r) = locate_scaled(n, lambda, seed)?;
        let count = argument_principle_count(lambda, &isolation_rectangle(n, z))?;
        if count != 1 {
            return Err(Error::Certification(format!(
                "isolation rectangle of pole {n} holds {count} zeros"
            )));
        }
        scaled.push((n, z, r));
    }
    let depth = scaled
        .iter()
        .map(|(_, z, _)| -z.im)
        .fold(0.0_f64, f64::max);
    let search = Rectangle {
        re_min: 0.25 * PI,
        re_max: (n_max as f64 + 0.5) * PI,
        im_min: -(2.0 * depth + 1.0),
        im_max: 0.0,
    };
    let count = argument_principle_count(lambda, &search)?;
    if count != n_max as i64 {
        return Err(Error::Certification(format!(
            "search rectangle holds {count} zeros but {n_max} poles were polished"
        )));
    }
    Ok(scaled
        .into_iter()
        .map(|(n, z, r)| Pole::from_scaled(n, z, r, params))
        .collect())
}

/// Poles `first..=last` without the per-pole certification, for long tails of
/// the pole sum. Each is still tied to its branch strip.
pub(crate) fn tail_poles(params: &ModelParams, first: u32, last: u32) -> Result<Vec<Pole>> {
    (first..=last)
        .map(|n| {
            let (z, r) = locate_scaled(n, params.lambda, SeedStrategy::BranchFixedPoint)?;
            Ok(Pole::from_scaled(n, z, r, params))
        })
        .collect()
}

pub fn q_value(pole: &Pole) -> f64 {
    -pole.energy_re / (2.0 * pole.energy_im)
}

pub fn lifetime_from_pole(pole: &Pole, params: &ModelParams) -> Lifetime {
    let raw = params.hbar / pole.width;
    let tau0 = crate::model::characteristic_time(params).unwrap_or(f64::NAN);
    Lifetime {
        raw,
        over_tau0: raw / tau0,
    }
}

/// Dimensionless residue coefficient: `C(k_n, x) √a = coef · sin(k_n x)`.
pub(crate) fn residue_coefficient(z: C64, lambda: f64, n: u32) -> Result<C64> {
    let dbar = denom_conj_z(z, lambda);
    if dbar.norm() < 1e-10 {
        return Err(Error::PoleProximity {
            z: format!("{z}"),
            magnitude: dbar.norm(),
        });
    }
    let dp = denom_deriv_z(z, lambda);
    Ok(-I * 2f64.sqrt() * overlap_z(z, n) * 4.0 * z * z / (dp * dbar))
}

/// `C(k_n, x) = -2πi Res_{k=k_n} f(k, x)`.
pub fn residue_amplitude(
    pole: &Pole,
    x: f64,
    state: &InitialState,
    params: &ModelParams,
) -> Result<C64> {
    let a = params.well_width;
    if !(0.0..=a).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "x = {x} lies outside the well [0, {a}]"
        )));
    }
    let z = pole.scaled_momentum(params);
    let coef = residue_coefficient(z, params.lambda, state.mode_index)?;
    Ok(coef * (z * (x / a)).sin() / a.sqrt())
}

/// `c_n = ∫₀^a |C(k_n, x)|² dx` on the 101-node trapezoid grid.
pub fn pole_weight(pole: &Pole, state: &InitialState, params: &ModelParams) -> Result<PoleWeight> {
    let z = pole.scaled_momentum(params);
    let coef = residue_coefficient(z, params.lambda, state.mode_index)?;
    let h = 1.0 / (WELL_GRID_POINTS - 1) as f64;
    let dens: Vec<f64> = (0..WELL_GRID_POINTS)
        .map(|j| (coef * (z * (j as f64 * h)).sin()).norm_sqr())
        .collect();
    Ok(PoleWeight {
        index: pole.index,
        weight: trapezoid(&dens, h),
    })
}

pub fn write_poles_csv<W: Write>(poles: &[Pole], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "re_k",
        "im_k",
        "gamma",
        "tau_over_tau0",
        "q_value",
        "residual",
    ])?;
    for p in poles {
        w.write_record([
            p.index.to_string(),
            format!("{:.17e}", p.momentum.re),
            format!("{:.17e}", p.momentum.im),
            format!("{:.17e}", p.width),
            format!("{:.17e}", p.lifetime_over_tau0),
            format!("{:.17e}", p.q_value),
            format!("{:.3e}", p.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_poles_csv(poles: &[Pole], path: &Path) -> Result<()> {
    write_poles_csv(poles, std::fs::File::create(path)?)
}
