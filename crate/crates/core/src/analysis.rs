//! Regime analysis of decay curves: exponential and power-law fits, the
//! breakdown time between them and oscillations in the crossover.
//!
//! Least squares are weighted by the trapezoid cell width of each sample
//! (in `t` for the exponential fit, in `ln t` for the power law), which makes
//! the fits discretizations of a continuous L2 fit and independent of how
//! the times were sampled. On a uniform grid this is ordinary least squares
//! up to the two half-weight end points.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{characteristic_time, ModelParams};
use crate::poles::Pole;
use crate::propagator::SurvivalSeries;

const MIN_FIT_POINTS: usize = 10;

/// Times, values and error bars of a decaying signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let errors = vec![0.0; times.len()];
        Self::with_errors(times, values, errors)
    }

    pub fn with_errors(times: Vec<f64>, values: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() != errors.len() {
            return Err(Error::Data("times, values and errors differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("times must be strictly increasing".into()));
        }
        Ok(DecayCurve {
            times,
            values,
            errors,
        })
    }

    /// Read columns `t` and `p_total` (and `err_est` when present) of a
    /// survival CSV.
    pub fn read_csv<R: std::io::Read>(input: R, source: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(ti), Some(pi)) = (col("t"), col("p_total")) else {
            return Err(Error::Data(format!("{source}: columns t and p_total are required")));
        };
        let ei = col("err_est");
        let (mut t, mut p, mut e) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("{source}, line {line}: column {} is not a number", &headers[i])))
            };
            t.push(num(ti)?);
            p.push(num(pi)?);
            e.push(match ei {
                Some(i) => num(i)?,
                None => 0.0,
            });
        }
        DecayCurve::with_errors(t, p, e).map_err(|err| Error::Data(format!("{source}: {err}")))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same curve with time multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> DecayCurve {
        DecayCurve {
            times: self.times.iter().map(|t| t * s).collect(),
            values: self.values.clone(),
            errors: self.errors.clone(),
        }
    }
}

impl From<&SurvivalSeries> for DecayCurve {
    fn from(s: &SurvivalSeries) -> Self {
        DecayCurve {
            times: s.times.clone(),
            values: s.p_total.clone(),
            errors: s.err_est.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Exponential,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    /// `τ` for the exponential, the exponent `n` for `B t^{-n}`.
    pub parameter: f64,
    /// `c` in `c e^{-t/τ}` or `B` in `B t^{-n}`.
    pub amplitude: f64,
    /// One-sigma uncertainty of `parameter` from the regression.
    pub uncertainty: f64,
    pub window: (f64, f64),
    /// RMS of the log residuals over the window.
    pub residual_rms: f64,
    pub points: usize,
}

impl FitResult {
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            FitKind::Exponential => self.amplitude * (-t / self.parameter).exp(),
            FitKind::PowerLaw => self.amplitude * t.powf(-self.parameter),
        }
    }

    fn ln_eval(&self, t: f64) -> f64 {
        match self.kind {
            FitKind::Exponential => self.amplitude.ln() - t / self.parameter,
            FitKind::PowerLaw => self.amplitude.ln() - self.parameter * t.ln(),
        }
    }
}

struct Line {
    intercept: f64,
    slope: f64,
    slope_sigma: f64,
    rms: f64,
}

/// Weighted straight-line fit; weights are normalised to sum to the number
/// of points so the usual `N - 2` variance estimate applies.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Line {
    let n = x.len() as f64;
    let wsum: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v * n / wsum).collect();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / n;
    let ym = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - xm) * (x[i] - xm);
        sxy += w[i] * (x[i] - xm) * (y[i] - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let mut ssr = 0.0;
    for i in 0..x.len() {
        let r = y[i] - intercept - slope * x[i];
        ssr += w[i] * r * r;
    }
    Line {
        intercept,
        slope,
        slope_sigma: (ssr / (n - 2.0) / sxx).sqrt(),
        rms: (ssr / n).sqrt(),
    }
}

fn cell_weights(x: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for i in 0..x.len().saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

fn indices_in(curve: &DecayCurve, lo: f64, hi: f64) -> Vec<usize> {
    (0..curve.len())
        .filter(|&i| curve.times[i] >= lo && curve.times[i] <= hi && curve.values[i] > 0.0)
        .collect()
}

/// Where the exponential window ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum WindowEnd {
    /// At this multiple of the current `τ̂`.
    Lifetimes(f64),
    /// At the first time the data leave the provisional fit by this
    /// relative amount.
    Deviation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExponentialWindow {
    /// Window starts at this multiple of `τ̂` (excludes the quadratic onset).
    pub start_lifetimes: f64,
    pub end: WindowEnd,
    pub max_iterations: usize,
    /// Relative change of `τ̂` accepted as a fixed point.
    pub tolerance: f64,
}

impl Default for ExponentialWindow {
    fn default() -> Self {
        ExponentialWindow {
            start_lifetimes: 0.1,
            end: WindowEnd::Lifetimes(4.25),
            max_iterations: 50,
            tolerance: 1e-10,
        }
    }
}

fn fit_exponential_on(curve: &DecayCurve, idx: &[usize], window: (f64, f64)) -> Result<FitResult> {
    if idx.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "only {} points in the exponential window [{:e}, {:e}]",
            idx.len(),
            window.0,
            window.1
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&i| curve.times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| curve.values[i].ln()).collect();
    let line = weighted_line(&t, &y, &cell_weights(&t));
    if line.slope >= 0.0 {
        return Err(Error::Fit("signal does not decay in the exponential window".into()));
    }
    let tau = -1.0 / line.slope;
    Ok(FitResult {
        kind: FitKind::Exponential,
        parameter: tau,
        amplitude: line.intercept.exp(),
        uncertainty: line.slope_sigma * tau * tau,
        window,
        residual_rms: line.rms,
        points: idx.len(),
    })
}

/// First time the curve falls below `1/e` of its first value, as the
/// starting guess for `τ̂`.
fn initial_lifetime(curve: &DecayCurve) -> Result<f64> {
    let p0 = curve.values.first().copied().unwrap_or(0.0);
    curve
        .times
        .iter()
        .zip(&curve.values)
        .find(|(_, &p)| p < p0 / std::f64::consts::E)
        .map(|(&t, _)| t)
        .ok_or_else(|| Error::Fit("curve never drops below 1/e of its start".into()))
}

/// `ln P = ln c - t/τ` over a window that follows `τ̂` to a fixed point.
pub fn fit_exponential(curve: &DecayCurve, policy: &ExponentialWindow) -> Result<FitResult> {
    if curve.len() < MIN_FIT_POINTS {
        return Err(Error::Fit("too few points for an exponential fit".into()));
    }
    let t_last = *curve.times.last().unwrap();
    let mut tau = initial_lifetime(curve)?;
    let mut previous: Option<FitResult> = None;
    for _ in 0..policy.max_iterations.max(1) {
        let lo = policy.start_lifetimes * tau;
        let hi = match policy.end {
            WindowEnd::Lifetimes(f) => (f * tau).min(t_last),
            WindowEnd::Deviation(frac) => match &previous {
                None => (3.0 * tau).min(t_last),
                Some(fit) => curve
                    .times
                    .iter()
                    .zip(&curve.values)
                    .find(|(&t, &p)| t > lo + tau && (p / fit.eval(t) - 1.0).abs() > frac)
                    .map(|(&t, _)| t)
                    .unwrap_or(t_last),
            },
        };
        let fit = fit_exponential_on(curve, &indices_in(curve, lo, hi), (lo, hi))?;
        let converged = (fit.parameter - tau).abs() <= policy.tolerance * tau;
        tau = fit.parameter;
        if converged {
            return Ok(fit);
        }
        previous = Some(fit);
    }
    Err(Error::Fit(format!(
        "lifetime iteration did not settle in {} steps (last tau {tau:e})",
        policy.max_iterations
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawWindow {
    /// Largest deviation of the local slope from the late-time slope.
    pub slope_band: f64,
    /// Minimum window length in decades.
    pub min_decades: f64,
}

impl Default for PowerLawWindow {
    fn default() -> Self {
        PowerLawWindow {
            slope_band: 0.05,
            min_decades: 0.5,
        }
    }
}

/// Centered log-log slopes; end points use one-sided differences.
pub fn local_slopes(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let lp: Vec<f64> = values.iter().map(|p| p.ln()).collect();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (lp[b] - lp[a]) / (lt[b] - lt[a])
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `ln P = ln B - n ln t` over the late window where the local slope stays
/// within the band around its late-time median.
pub fn fit_powerlaw(curve: &DecayCurve, policy: &PowerLawWindow) -> Result<FitResult> {
    let n = curve.len();
    if n < MIN_FIT_POINTS || curve.values.iter().any(|&p| !(p > 0.0)) || curve.times[0] <= 0.0 {
        return Err(Error::Fit(
            "power-law fit needs at least 10 positive samples at positive times".into(),
        ));
    }
    let slopes = local_slopes(&curve.times, &curve.values);
    let t_end = curve.times[n - 1];
    let span = 10f64.powf(policy.min_decades);
    let tail: Vec<f64> = (0..n)
        .filter(|&i| curve.times[i] >= t_end / span)
        .map(|i| slopes[i])
        .collect();
    if tail.len() < 3 || curve.times[0] > t_end / span {
        return Err(Error::Fit("series shorter than the stable-slope window".into()));
    }
    let reference = median(tail);
    let mut first = n - 1;
    while first > 0 && (slopes[first - 1] - reference).abs() <= policy.slope_band {
        first -= 1;
    }
    let t_lo = curve.times[first];
    if t_end / t_lo < span || n - first < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "no stable log-log slope over {} decades before t = {t_end:e}",
            policy.min_decades
        )));
    }
    let x: Vec<f64> = curve.times[first..].iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = curve.values[first..].iter().map(|p| p.ln()).collect();
    let line = weighted_line(&x, &y, &cell_weights(&x));
    Ok(FitResult {
        kind: FitKind::PowerLaw,
        parameter: -line.slope,
        amplitude: line.intercept.exp(),
        uncertainty: line.slope_sigma,
        window: (t_lo, t_end),
        residual_rms: line.rms,
        points: n - first,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// Later crossing of the two fitted curves, if it lies in the series.
    pub intersection: Option<f64>,
    /// First time after the exponential window start at which the data
    /// exceed the exponential fit by 5%.
    pub deviation_time: Option<f64>,
}

/// Crossing of `c e^{-t/τ}` and `B t^{-n}` by bisection, and the 5%
/// deviation time.
pub fn measure_breakdown(curve: &DecayCurve, exp_fit: &FitResult, pow_fit: &FitResult) -> Breakdown {
    let g = |t: f64| exp_fit.ln_eval(t) - pow_fit.ln_eval(t);
    let t_last = curve.times.last().copied().unwrap_or(0.0);
    let mut intersection = None;
    for (lo, hi) in [(exp_fit.window.1, pow_fit.window.0), (exp_fit.window.1, t_last)] {
        if lo < hi && g(lo) > 0.0 && g(hi) < 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if g(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
                if b - a <= 1e-14 * b {
                    break;
                }
            }
            intersection = Some(0.5 * (a + b));
            break;
        }
    }
    let deviation_time = curve
        .times
        .iter()
        .zip(&curve.values)
        .find(|(&t, &p)| t >= exp_fit.window.0 && p > 1.05 * exp_fit.eval(t))
        .map(|(&t, _)| t);
    Breakdown {
        intersection,
        deviation_time,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    /// Sign changes of the discrete derivative above the noise floor.
    pub count: usize,
    /// Midpoint times at which the derivative changed sign.
    pub extrema: Vec<f64>,
    pub window: (f64, f64),
    pub points: usize,
}

/// Sign changes of `ΔP` in `[t_lo, t_hi]`; differences smaller than three
/// times the local error estimate are treated as noise.
pub fn detect_oscillations_in(curve: &DecayCurve, t_lo: f64, t_hi: f64) -> OscillationReport {
    let idx: Vec<usize> = (0..curve.len())
        .filter(|&i| curve.times[i] >= t_lo && curve.times[i] <= t_hi)
        .collect();
    let mut count = 0;
    let mut extrema = Vec::new();
    let mut last_sign = 0i8;
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        let d = curve.values[j] - curve.values[i];
        let floor = 3.0 * (curve.errors[i] + curve.errors[j]);
        if d.abs() <= floor || d == 0.0 {
            continue;
        }
        let sign = if d > 0.0 { 1 } else { -1 };
        if last_sign != 0 && sign != last_sign {
            count += 1;
            extrema.push(curve.times[i]);
        }
        last_sign = sign;
    }
    OscillationReport {
        count,
        extrema,
        window: (t_lo, t_hi),
        points: idx.len(),
    }
}

/// Oscillations between the end of the exponential window and the start of
/// the power-law window (empty when the windows overlap).
pub fn detect_oscillations(curve: &DecayCurve, exp_fit: &FitResult, pow_fit: &FitResult) -> OscillationReport {
    let (lo, hi) = (exp_fit.window.1, pow_fit.window.0);
    if hi <= lo {
        return OscillationReport {
            count: 0,
            extrema: Vec::new(),
            window: (lo, hi),
            points: 0,
        };
    }
    detect_oscillations_in(curve, lo, hi)
}

/// `|a - b|` relative to their mean, in percent.
pub fn relative_difference_pct(a: f64, b: f64) -> f64 {
    200.0 * (a - b).abs() / (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub lambda: f64,
    pub tau0: f64,
    pub exponential: FitResult,
    pub power_law: Option<FitResult>,
    pub tau_fit: f64,
    pub tau_pole: f64,
    /// `|τ_fit - τ_pole|` relative to their mean, in percent.
    pub discrepancy_pct: f64,
    pub q_value: f64,
    pub breakdown_time: Option<f64>,
    pub deviation_time: Option<f64>,
    /// `10 (ħ/Γ₁) ln λ`; absent for `λ ≤ 1`.
    pub breakdown_estimate: Option<f64>,
    pub oscillation_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitPolicies {
    pub exponential: ExponentialWindow,
    pub power_law: PowerLawWindow,
}

/// All regime quantities of one survival series. The power-law part is
/// omitted (not an error) when the series does not reach the power law.
pub fn regime_report(series: &SurvivalSeries, pole_1: &Pole, policies: &FitPolicies) -> Result<RegimeReport> {
    regime_report_curve(&DecayCurve::from(series), &series.params, pole_1, policies)
}

/// [`regime_report`] for a bare curve (times in the units of `params`).
pub fn regime_report_curve(
    curve: &DecayCurve,
    params: &ModelParams,
    pole_1: &Pole,
    policies: &FitPolicies,
) -> Result<RegimeReport> {
    let exponential = fit_exponential(curve, &policies.exponential)?;
    let power_law = fit_powerlaw(curve, &policies.power_law).ok();
    let (breakdown_time, deviation_time, oscillation_count) = match &power_law {
        Some(pw) => {
            let b = measure_breakdown(curve, &exponential, pw);
            let osc = detect_oscillations(curve, &exponential, pw);
            (b.intersection, b.deviation_time, Some(osc.count))
        }
        None => (None, None, None),
    };
    let breakdown_estimate = crate::propagator::breakdown_estimate(params, pole_1).ok();
    Ok(RegimeReport {
        lambda: params.lambda,
        tau0: characteristic_time(params)?,
        tau_fit: exponential.parameter,
        tau_pole: pole_1.lifetime,
        discrepancy_pct: relative_difference_pct(exponential.parameter, pole_1.lifetime),
        q_value: pole_1.q_value,
        exponential,
        power_law,
        breakdown_time,
        deviation_time,
        breakdown_estimate,
        oscillation_count,
    })
}

/// Per-point log residuals of a fit, as CSV (`t, value, fit, log_residual`).
pub fn write_residuals_csv<W: Write>(curve: &DecayCurve, fit: &FitResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value", "fit", "log_residual"])?;
    for (&t, &p) in curve.times.iter().zip(&curve.values) {
        if t < fit.window.0 || t > fit.window.1 || p <= 0.0 {
            continue;
        }
        let f = fit.eval(t);
        w.write_record([t, p, f, p.ln() - f.ln()].iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}
