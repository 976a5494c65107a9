//! Measured decay curves: ingestion, the λ scan against the model and the
//! mapping of the fitted time scale to a physical `m a²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use crate::analysis::{fit_exponential, DecayCurve, ExponentialWindow};
use crate::constants::{BOHR_RADIUS, HBAR, NANOSECOND, PROTON_MASS};
use crate::error::{Error, Result};
use crate::model::{InitialState, ModelParams};
use crate::poles::{find_poles, SeedStrategy};
use crate::propagator::{log_time_grid, survival_series, PropagatorConfig, SurvivalSeries};

/// Minimum number of data rows accepted by [`parse_decay_csv`].
pub const MIN_ROWS: usize = 10;

/// Decades of intensity a curve must span for the λ scan.
pub const MIN_SCAN_DECADES: f64 = 3.0;

/// Strengths always emitted as comparison curves by [`lambda_scan`].
pub const COMPARISON_LAMBDAS: [f64; 3] = [3.2, 3.6, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the largest intensity.
    #[default]
    Peak,
    /// Divide by the first intensity.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSeries {
    pub times_ns: Vec<f64>,
    /// Normalized intensities.
    pub intensities: Vec<f64>,
    pub normalization: Normalization,
    /// Intensity divided out by the normalization.
    pub scale: f64,
    pub source: String,
}

impl ExperimentSeries {
    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }

    /// Decades between the largest and the smallest positive intensity.
    pub fn decades(&self) -> f64 {
        let pos = self.intensities.iter().copied().filter(|&v| v > 0.0);
        let (lo, hi) = pos.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > 0.0 {
            (hi / lo).log10()
        } else {
            0.0
        }
    }

    /// Points with positive intensity as a decay curve in ns.
    pub fn curve(&self) -> Result<DecayCurve> {
        let (t, v): (Vec<f64>, Vec<f64>) = self
            .times_ns
            .iter()
            .zip(&self.intensities)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&t, &v)| (t, v))
            .unzip();
        DecayCurve::new(t, v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_ns", "intensity"])?;
        for (t, v) in self.times_ns.iter().zip(&self.intensities) {
            w.write_record([format!("{t:e}"), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Parse a two-column `t_ns, intensity` CSV with a header row.
pub fn parse_decay_csv<R: Read>(input: R, policy: Normalization, source: &str) -> Result<ExperimentSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{source}: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Data(format!(
                "{source}, line {line}: expected 2 columns, found {}",
                record.len()
            )));
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("{source}, line {line}: {name} {:?} is not a finite number", &record[i])))
        };
        let t = field(0, "time")?;
        let v = field(1, "intensity")?;
        if v < 0.0 {
            return Err(Error::Data(format!("{source}, line {line}: negative intensity {v}")));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Data(format!(
                    "{source}, line {line}: time {t} does not increase (previous {prev})"
                )));
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.len() < MIN_ROWS {
        return Err(Error::Data(format!(
            "{source}: {} data rows, at least {MIN_ROWS} required",
            times.len()
        )));
    }
    let scale = match policy {
        Normalization::Peak => values.iter().copied().fold(0.0, f64::max),
        Normalization::First => values[0],
    };
    if !(scale > 0.0) {
        return Err(Error::Data(format!("{source}: normalizing intensity is zero")));
    }
    Ok(ExperimentSeries {
        times_ns: times,
        intensities: values.iter().map(|v| v / scale).collect(),
        normalization: policy,
        scale,
        source: source.to_string(),
    })
}

pub fn ingest_decay_csv(path: &Path, policy: Normalization) -> Result<ExperimentSeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_decay_csv(file, policy, &path.display().to_string())
}

/// Model survival for one λ with its fitted lifetime, sampled densely
/// enough to be interpolated in log-log space.
#[derive(Debug, Clone)]
pub struct ModelCurve {
    pub lambda: f64,
    /// Fitted lifetime in units of the model time.
    pub tau_fit: f64,
    pub series: SurvivalSeries,
}

impl ModelCurve {
    /// Survival on `[t_lo, t_hi]` (model time, `t_lo > 0`), sampled on `points`
    /// log-spaced times that also cover the exponential fit window.
    pub fn compute(
        params: &ModelParams,
        state: &InitialState,
        t_lo: f64,
        t_hi: f64,
        points: usize,
        cfg: &PropagatorConfig,
    ) -> Result<Self> {
        let pole = find_poles(params, 1, SeedStrategy::default())?.remove(0);
        let tau = pole.lifetime;
        let lo = t_lo.min(0.01 * tau);
        let hi = t_hi.max(20.0 * tau);
        let times = log_time_grid(lo, hi, points)?;
        let series = survival_series(&times, state, params, cfg)?;
        let fit = fit_exponential(&DecayCurve::from(&series), &ExponentialWindow::default())?;
        Ok(ModelCurve {
            lambda: params.lambda,
            tau_fit: fit.parameter,
            series,
        })
    }

    /// `P(t)` by linear interpolation of `ln P` in `ln t`; `P(0) = 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let ts = &self.series.times;
        let ps = &self.series.p_total;
        if t == 0.0 {
            return Ok(1.0);
        }
        if t < ts[0] || t > ts[ts.len() - 1] {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside the model curve [{}, {}]",
                ts[0],
                ts[ts.len() - 1]
            )));
        }
        let i = ts.partition_point(|&x| x < t).clamp(1, ts.len() - 1);
        let f = (t.ln() - ts[i - 1].ln()) / (ts[i].ln() - ts[i - 1].ln());
        Ok((ps[i - 1].ln() * (1.0 - f) + ps[i].ln() * f).exp())
    }
}

/// Model curve sampled at times in ns, mapping model time to ns through
/// `τ_fit ↔ τ_exp`, with optional multiplicative Gaussian noise
/// `(1 + σ g)` from a seeded generator.
pub fn synthetic_experiment(
    model: &ModelCurve,
    tau_exp_ns: f64,
    times_ns: &[f64],
    noise: f64,
    seed: u64,
) -> Result<ExperimentSeries> {
    if !(tau_exp_ns > 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidParameter("tau_exp must be > 0 and noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let to_model = model.tau_fit / tau_exp_ns;
    let intensities = times_ns
        .iter()
        .map(|&t| {
            let factor = (1.0 + noise * normal.sample(&mut rng)).max(0.0);
            Ok(model.eval(t * to_model)? * factor)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentSeries {
        times_ns: times_ns.to_vec(),
        intensities,
        normalization: Normalization::First,
        scale: 1.0,
        source: format!("synthetic lambda={} noise={noise} seed={seed}", model.lambda),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub tau_fit_model: f64,
    /// `Σ (ln I - ln P)²` over the positive points.
    pub sum_sq_log_residuals: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCurve {
    pub lambda: f64,
    pub times_ns: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScan {
    pub best_lambda: f64,
    pub tau_exp_ns: f64,
    pub normalization: Normalization,
    pub rows: Vec<ScanRow>,
    pub curves: Vec<ComparisonCurve>,
}

impl LambdaScan {
    pub fn write_table_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "tau_fit_model", "sum_sq_log_residuals", "points", "best"])?;
        for r in &self.rows {
            w.write_record([
                format!("{}", r.lambda),
                format!("{:e}", r.tau_fit_model),
                format!("{:e}", r.sum_sq_log_residuals),
                r.points.to_string(),
                (r.lambda == self.best_lambda).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "t_ns", "p_total"])?;
        for c in &self.curves {
            for (t, p) in c.times_ns.iter().zip(&c.survival) {
                w.write_record([format!("{}", c.lambda), format!("{t:e}"), format!("{p:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Points of the model series used per curve in the scan.
const SCAN_POINTS: usize = 400;

/// Compare the measured curve with the model for each λ of the grid. Model
/// time is mapped to ns by equating the fitted lifetimes; the score is the
/// sum of squared log residuals. Comparison curves for
/// [`COMPARISON_LAMBDAS`] are always included.
pub fn lambda_scan(
    experiment: &ExperimentSeries,
    lambda_grid: &[f64],
    state: &InitialState,
    params: &ModelParams,
    cfg: &PropagatorConfig,
) -> Result<LambdaScan> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let decades = experiment.decades();
    if decades < MIN_SCAN_DECADES {
        return Err(Error::Data(format!(
            "{}: intensity spans {decades:.2} decades, the scan needs at least {MIN_SCAN_DECADES}",
            experiment.source
        )));
    }
    let data = experiment.curve()?;
    let exp_fit = fit_exponential(&data, &ExponentialWindow::default())?;
    let tau_exp = exp_fit.parameter;
    let t_first = data.times.iter().copied().find(|&t| t > 0.0).unwrap_or(tau_exp);
    let t_last = data.times[data.len() - 1];

    let mut lambdas: Vec<f64> = lambda_grid.to_vec();
    for l in COMPARISON_LAMBDAS {
        if !lambdas.contains(&l) {
            lambdas.push(l);
        }
    }
    let models = lambdas
        .iter()
        .map(|&l| {
            let p = ModelParams { lambda: l, ..*params };
            let pole = find_poles(&p, 1, SeedStrategy::default())?.remove(0);
            // lifetimes agree to a few percent; pad the range accordingly
            let to_model = pole.lifetime / tau_exp;
            ModelCurve::compute(&p, state, 0.5 * t_first * to_model, 2.0 * t_last * to_model, SCAN_POINTS, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for m in &models {
        let to_model = m.tau_fit / tau_exp;
        if lambda_grid.contains(&m.lambda) {
            let mut sum = 0.0;
            for (&t, &v) in data.times.iter().zip(&data.values) {
                let r = v.ln() - m.eval(t * to_model)?.ln();
                sum += r * r;
            }
            rows.push(ScanRow {
                lambda: m.lambda,
                tau_fit_model: m.tau_fit,
                sum_sq_log_residuals: sum,
                points: data.len(),
            });
        }
        if COMPARISON_LAMBDAS.contains(&m.lambda) {
            let times_ns: Vec<f64> = m.series.times.iter().map(|t| t / to_model).collect();
            curves.push(ComparisonCurve {
                lambda: m.lambda,
                times_ns,
                survival: m.series.p_total.clone(),
            });
        }
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.sum_sq_log_residuals.total_cmp(&b.sum_sq_log_residuals))
        .expect("non-empty grid");
    Ok(LambdaScan {
        best_lambda: best.lambda,
        tau_exp_ns: tau_exp,
        normalization: experiment.normalization,
        rows,
        curves,
    })
}

/// Internal unit system: how many internal units make one kilogram, metre
/// and second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub kilogram: f64,
    pub metre: f64,
    pub second: f64,
}

impl UnitSystem {
    pub const SI: UnitSystem = UnitSystem {
        kilogram: 1.0,
        metre: 1.0,
        second: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMapping {
    pub lambda: f64,
    pub tau_th_over_tau0: f64,
    pub tau_exp_ns: f64,
    /// `m a²` in units of `m_p a₀²`.
    pub ma2: f64,
    /// `A Z = 479 · 254`, the order-of-magnitude comparison value.
    pub az_reference: f64,
}

/// `m a² = [2π³ħ/λ²] τ_exp / (τ_th/τ0)` in units of `m_p a₀²`.
pub fn scale_mapping(lambda: f64, tau_th_over_tau0: f64, tau_exp_ns: f64) -> Result<ScaleMapping> {
    scale_mapping_in(lambda, tau_th_over_tau0, tau_exp_ns, &UnitSystem::SI)
}

/// [`scale_mapping`] evaluated with all constants expressed in `units`.
pub fn scale_mapping_in(
    lambda: f64,
    tau_th_over_tau0: f64,
    tau_exp_ns: f64,
    units: &UnitSystem,
) -> Result<ScaleMapping> {
    if !(lambda > 0.0 && tau_th_over_tau0 > 0.0 && tau_exp_ns > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale mapping needs positive inputs, got lambda = {lambda}, tau_th/tau0 = {tau_th_over_tau0}, tau_exp = {tau_exp_ns} ns"
        )));
    }
    let u = units;
    let hbar = HBAR * u.kilogram * u.metre * u.metre / u.second;
    let tau_exp = tau_exp_ns * NANOSECOND * u.second;
    let ma2 = 2.0 * PI.powi(3) * hbar / (lambda * lambda) * tau_exp / tau_th_over_tau0;
    let unit = PROTON_MASS * u.kilogram * (BOHR_RADIUS * u.metre).powi(2);
    Ok(ScaleMapping {
        lambda,
        tau_th_over_tau0,
        tau_exp_ns,
        ma2: ma2 / unit,
        az_reference: 479.0 * 254.0,
    })
}
