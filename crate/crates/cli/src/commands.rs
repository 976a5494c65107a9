use std::io::Write;
use std::path::Path;

use deltashell::analysis::{
    fit_exponential, regime_report_curve, write_residuals_csv, DecayCurve, FitResult, RegimeReport,
};
use deltashell::experiment::{
    ingest_decay_csv, lambda_scan, scale_mapping, synthetic_experiment, ExperimentSeries, ModelCurve,
};
use deltashell::poles::{find_poles, write_poles_csv, Pole, SeedStrategy};
use deltashell::propagator::{log_time_grid, survival_series_tau0, wave_field, Method, SurvivalSeries};
use deltashell::tables::{
    format_table1, format_table2, format_table3, regime_runs, table1, table2, table3, write_table1_csv,
    write_table2_csv, write_table3_csv,
};
use deltashell::tdse::{validate_density, Simulation, TdseConfig};
use deltashell::{InitialState, ModelParams};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{lambda_tag, Format, Sink};
use crate::CliError;

fn state(cfg: &RunConfig) -> Result<InitialState, CliError> {
    Ok(InitialState::new(cfg.model.state)?)
}

fn first_pole(params: &ModelParams) -> Result<Pole, CliError> {
    Ok(find_poles(params, 1, SeedStrategy::default())?.remove(0))
}

fn series_for(lambda: f64, cfg: &RunConfig) -> Result<SurvivalSeries, CliError> {
    let params = ModelParams::new(lambda)?;
    let t = &cfg.time;
    Ok(survival_series_tau0(
        t.t_min_tau0,
        t.t_max_tau0,
        t.points,
        &state(cfg)?,
        &params,
        &cfg.propagator,
    )?)
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

pub fn poles(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let mut all = Vec::new();
    for &lambda in &cfg.model.lambdas {
        let params = ModelParams::new(lambda)?;
        let poles = find_poles(&params, cfg.poles.count, cfg.poles.seed)?;
        let p1 = &poles[0];
        println!(
            "lambda {lambda}: k1 a = {:.10} {:+.10}i, tau1/tau0 = {:.6}, Q = {:.6}",
            p1.momentum.re, p1.momentum.im, p1.lifetime_over_tau0, p1.q_value
        );
        if sink.format == Format::Csv {
            sink.csv(&format!("poles_{}.csv", lambda_tag(lambda)), |buf| write_poles_csv(&poles, buf))?;
        }
        all.push(json!({ "lambda": lambda, "poles": poles }));
    }
    if sink.format == Format::Json {
        sink.json("poles.json", &all)?;
    }
    Ok(())
}

/// `t/τ_fit` of a series, or `None` (with a warning) when the range does not
/// support an exponential fit.
fn tau_fit(series: &SurvivalSeries, cfg: &RunConfig) -> Option<f64> {
    match fit_exponential(&DecayCurve::from(series), &cfg.fits.exponential) {
        Ok(fit) => Some(fit.parameter),
        Err(e) => {
            eprintln!("warning: lambda {}: no t/tau_fit output: {e}", series.params.lambda);
            None
        }
    }
}

fn write_tau_fit_csv(series: &SurvivalSeries, tau: f64, out: &mut Vec<u8>) -> deltashell::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_over_tau_fit", "p_total"])?;
    for (t, p) in series.times.iter().zip(&series.p_total) {
        w.write_record([sci(t / tau), sci(*p)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn survival(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    for &lambda in &cfg.model.lambdas {
        let series = series_for(lambda, cfg)?;
        let tau = tau_fit(&series, cfg);
        let tag = lambda_tag(lambda);
        match sink.format {
            Format::Csv => {
                sink.csv(&format!("survival_{tag}.csv"), |buf| series.write_csv(buf))?;
                if let Some(tau) = tau {
                    sink.csv(&format!("survival_{tag}_tau_fit.csv"), |buf| write_tau_fit_csv(&series, tau, buf))?;
                }
            }
            Format::Json => {
                let t_over_tau_fit: Option<Vec<f64>> = tau.map(|tau| series.times.iter().map(|t| t / tau).collect());
                sink.json(
                    &format!("survival_{tag}.json"),
                    &json!({ "series": series, "tau_fit": tau, "t_over_tau_fit": t_over_tau_fit }),
                )?;
            }
        }
        println!(
            "lambda {lambda}: {} times, P(end) = {:e}, tau_fit/tau0 = {}",
            series.len(),
            series.p_total[series.len() - 1],
            tau.map_or("n/a".into(), |t| format!("{:.6}", t / series.tau0))
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct FieldSample {
    t_over_tau0: f64,
    x: f64,
    background: [f64; 2],
    poles: [f64; 2],
}

pub fn decompose(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let st = state(cfg)?;
    for &lambda in &cfg.model.lambdas {
        let params = ModelParams::new(lambda)?;
        let series = series_for(lambda, cfg)?;
        let closure: Vec<f64> = (0..series.len())
            .map(|i| series.p_bg[i] + series.p_poles[i] + series.p_interf[i] - series.p_total[i])
            .collect();
        let worst = closure.iter().fold(0.0_f64, |m, c| m.max(c.abs()));

        let mut fields = Vec::new();
        for &s in &cfg.decompose.field_times_tau0 {
            let t = s * series.tau0;
            let bg = wave_field(t, Method::BackgroundOnly, &st, &params, &cfg.propagator)?;
            let po = wave_field(t, Method::PolesOnly, &st, &params, &cfg.propagator)?;
            for ((x, b), p) in bg.grid.iter().zip(&bg.values).zip(&po.values) {
                fields.push(FieldSample {
                    t_over_tau0: s,
                    x: *x,
                    background: [b.re, b.im],
                    poles: [p.re, p.im],
                });
            }
        }

        let tag = lambda_tag(lambda);
        match sink.format {
            Format::Csv => {
                sink.csv(&format!("decomposition_{tag}.csv"), |buf| {
                    let mut w = csv::Writer::from_writer(buf);
                    w.write_record([
                        "t",
                        "t_over_tau0",
                        "p_total",
                        "p_bg",
                        "p_poles",
                        "p_interf",
                        "closure",
                        "poles_used",
                    ])?;
                    for i in 0..series.len() {
                        let mut rec: Vec<String> = [
                            series.times[i],
                            series.t_over_tau0[i],
                            series.p_total[i],
                            series.p_bg[i],
                            series.p_poles[i],
                            series.p_interf[i],
                            closure[i],
                        ]
                        .iter()
                        .map(|v| sci(*v))
                        .collect();
                        rec.push(series.poles_used[i].to_string());
                        w.write_record(rec)?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
                sink.csv(&format!("fields_{tag}.csv"), |buf| {
                    let mut w = csv::Writer::from_writer(buf);
                    w.write_record(["t_over_tau0", "x", "re_bg", "im_bg", "re_poles", "im_poles"])?;
                    for f in &fields {
                        w.write_record(
                            [f.t_over_tau0, f.x, f.background[0], f.background[1], f.poles[0], f.poles[1]]
                                .iter()
                                .map(|v| sci(*v)),
                        )?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
            }
            Format::Json => {
                sink.json(
                    &format!("decomposition_{tag}.json"),
                    &json!({ "series": series, "closure": closure, "fields": fields }),
                )?;
            }
        }
        println!("lambda {lambda}: max |p_bg + p_poles + p_interf - p_total| = {worst:e}");
    }
    Ok(())
}

pub fn tdse_validate(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let td = &cfg.tdse;
    let params = ModelParams::new(td.lambda)?;
    let st = state(cfg)?;
    let report = validate_density(td.x, td.t_over_tau0, &td.deltas, td.domain_length, &td.grid_check, &st, &params)?;
    for r in &report.runs {
        println!(
            "delta {:.5}: |psi|^2 = {:.9} (dx {:.3e}, dt {:.3e}, reflection {:.1e})",
            r.delta, r.value, r.dx, r.dt, r.reflection
        );
    }
    println!(
        "extrapolated {:.9} +- {:.2e}, contour {:.9}, relative difference {:.3e}",
        report.extrapolation.value, report.extrapolation.error, report.contour_value, report.relative_difference
    );
    sink.json("tdse_validation.json", &report)?;
    if sink.format == Format::Csv {
        sink.csv("tdse_runs.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["delta", "dx", "dt", "absorber_strength", "reflection", "value", "refined_value"])?;
            for r in &report.runs {
                let mut rec: Vec<String> =
                    [r.delta, r.dx, r.dt, r.absorber_strength, r.reflection, r.value].iter().map(|v| sci(*v)).collect();
                rec.push(r.refined_value.map(sci).unwrap_or_default());
                w.write_record(rec)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    if td.snapshot {
        let narrowest = td.deltas.iter().copied().fold(f64::INFINITY, f64::min);
        let tcfg = TdseConfig::new(narrowest * params.well_width, td.domain_length, &params)?;
        let mut sim = Simulation::from_state(&st, &params, &tcfg)?;
        sim.advance_to(report.t)?;
        sink.csv("tdse_snapshot.csv", |buf| sim.write_snapshot_csv(buf))?;
    }
    Ok(())
}

fn fit_rows(report: &RegimeReport) -> Vec<&FitResult> {
    std::iter::once(&report.exponential).chain(report.power_law.as_ref()).collect()
}

fn write_fit_outputs(
    tag: &str,
    curve: &DecayCurve,
    report: &RegimeReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    match sink.format {
        Format::Json => sink.json(&format!("fit_{tag}.json"), report)?,
        Format::Csv => {
            sink.csv(&format!("fit_{tag}.csv"), |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record([
                    "kind",
                    "parameter",
                    "amplitude",
                    "uncertainty",
                    "window_lo",
                    "window_hi",
                    "residual_rms",
                    "points",
                ])?;
                for f in fit_rows(report) {
                    let kind = serde_json::to_value(f.kind)?;
                    let mut rec = vec![kind.as_str().unwrap_or_default().to_string()];
                    rec.extend(
                        [f.parameter, f.amplitude, f.uncertainty, f.window.0, f.window.1, f.residual_rms]
                            .iter()
                            .map(|v| sci(*v)),
                    );
                    rec.push(f.points.to_string());
                    w.write_record(rec)?;
                }
                w.flush()?;
                Ok(())
            })?;
            sink.csv(&format!("regime_{tag}.csv"), |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["quantity", "value"])?;
                let opt = |v: Option<f64>| v.map(sci).unwrap_or_default();
                let rows = [
                    ("lambda", format!("{}", report.lambda)),
                    ("tau0", sci(report.tau0)),
                    ("tau_fit", sci(report.tau_fit)),
                    ("tau_pole", sci(report.tau_pole)),
                    ("discrepancy_pct", sci(report.discrepancy_pct)),
                    ("q_value", sci(report.q_value)),
                    ("breakdown_time", opt(report.breakdown_time)),
                    ("deviation_time", opt(report.deviation_time)),
                    ("breakdown_estimate", opt(report.breakdown_estimate)),
                    (
                        "oscillation_count",
                        report.oscillation_count.map(|c| c.to_string()).unwrap_or_default(),
                    ),
                ];
                for (k, v) in rows {
                    w.write_record([k, v.as_str()])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    for f in fit_rows(report) {
        let kind = serde_json::to_value(f.kind).map_err(deltashell::Error::from)?;
        let kind = kind.as_str().unwrap_or_default().to_string();
        sink.csv(&format!("residuals_{kind}_{tag}.csv"), |buf| write_residuals_csv(curve, f, buf))?;
    }
    let n = report.power_law.map_or("n/a".into(), |p| format!("{:.4} +- {:.4}", p.parameter, p.uncertainty));
    println!(
        "{tag}: tau_fit/tau0 = {:.5}, tau_pole/tau0 = {:.5}, n = {n}",
        report.tau_fit / report.tau0,
        report.tau_pole / report.tau0
    );
    Ok(())
}

/// Fits of a survival CSV (columns `t`, `p_total`, in units `m = a = ħ = 1`)
/// against the first λ of the config, or of freshly computed series for
/// every λ.
pub fn fit(cfg: &RunConfig, input: Option<&Path>, sink: &mut Sink) -> Result<(), CliError> {
    match input {
        Some(path) => {
            let lambda = cfg.model.lambdas[0];
            let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let curve = DecayCurve::read_csv(file, &path.display().to_string())?;
            let params = ModelParams::new(lambda)?;
            let report = regime_report_curve(&curve, &params, &first_pole(&params)?, &cfg.fits)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
            write_fit_outputs(stem, &curve, &report, sink)
        }
        None => {
            for &lambda in &cfg.model.lambdas {
                let series = series_for(lambda, cfg)?;
                let curve = DecayCurve::from(&series);
                let report = regime_report_curve(&curve, &series.params, &first_pole(&series.params)?, &cfg.fits)?;
                write_fit_outputs(&lambda_tag(lambda), &curve, &report, sink)?;
            }
            Ok(())
        }
    }
}

pub fn tables(cfg: &RunConfig, which: &[u8], sink: &mut Sink) -> Result<(), CliError> {
    let mut json_doc = serde_json::Map::new();
    if which.contains(&1) {
        let t1 = table1()?;
        let text = format_table1(&t1);
        print!("{text}");
        match sink.format {
            Format::Csv => {
                sink.csv("table1.csv", |buf| write_table1_csv(&t1, buf))?;
                sink.text("table1.txt", &text)?;
            }
            Format::Json => {
                json_doc.insert("table1".into(), serde_json::to_value(&t1).map_err(deltashell::Error::from)?);
            }
        }
    }
    if which.contains(&2) || which.contains(&3) {
        let runs = regime_runs(&cfg.table_config())?;
        if which.contains(&2) {
            let rows = table2(&runs);
            let text = format_table2(&rows);
            print!("{text}");
            match sink.format {
                Format::Csv => {
                    sink.csv("table2.csv", |buf| write_table2_csv(&rows, buf))?;
                    sink.text("table2.txt", &text)?;
                }
                Format::Json => {
                    json_doc.insert("table2".into(), serde_json::to_value(&rows).map_err(deltashell::Error::from)?);
                }
            }
        }
        if which.contains(&3) {
            let rows = table3(&runs);
            let text = format_table3(&rows);
            print!("{text}");
            match sink.format {
                Format::Csv => {
                    sink.csv("table3.csv", |buf| write_table3_csv(&rows, buf))?;
                    sink.text("table3.txt", &text)?;
                }
                Format::Json => {
                    json_doc.insert("table3".into(), serde_json::to_value(&rows).map_err(deltashell::Error::from)?);
                }
            }
        }
        if sink.format == Format::Csv {
            for run in &runs {
                let tag = lambda_tag(run.series.params.lambda);
                sink.csv(&format!("survival_{tag}.csv"), |buf| run.series.write_csv(buf))?;
            }
        }
    }
    if sink.format == Format::Json {
        sink.json("tables.json", &json_doc)?;
    }
    std::io::stdout().flush().ok();
    Ok(())
}

/// Samples of the model series behind a synthetic experiment.
const SYNTHETIC_POINTS: usize = 400;

fn experiment(cfg: &RunConfig, input: Option<&Path>) -> Result<ExperimentSeries, CliError> {
    let c = &cfg.compare;
    match input.or(c.input.as_deref()) {
        Some(path) => Ok(ingest_decay_csv(path, c.normalization)?),
        None => {
            let s = &c.synthetic;
            let params = ModelParams::new(s.lambda)?;
            // pad the range: the pole and fitted lifetimes differ by a few percent
            let to_model = first_pole(&params)?.lifetime / s.tau_exp_ns;
            let (lo, hi) = (0.5 * s.t_min_ns * to_model, 2.0 * s.t_max_ns * to_model);
            let model = ModelCurve::compute(&params, &state(cfg)?, lo, hi, SYNTHETIC_POINTS, &cfg.propagator)?;
            let times = log_time_grid(s.t_min_ns, s.t_max_ns, s.points)?;
            Ok(synthetic_experiment(&model, s.tau_exp_ns, &times, s.noise, s.seed)?)
        }
    }
}

pub fn compare(cfg: &RunConfig, input: Option<&Path>, sink: &mut Sink) -> Result<(), CliError> {
    if cfg.compare.lambda_grid.is_empty() {
        return Err(CliError::usage("empty lambda grid"));
    }
    let exp = experiment(cfg, input)?;
    let scan = lambda_scan(&exp, &cfg.compare.lambda_grid, &state(cfg)?, &ModelParams::default(), &cfg.propagator)?;
    for r in &scan.rows {
        println!("lambda {}: sum of squared log residuals {:.6e}", r.lambda, r.sum_sq_log_residuals);
    }
    println!(
        "source: {}; normalization: {:?}; tau_exp = {:.4} ns; best lambda = {}",
        exp.source, scan.normalization, scan.tau_exp_ns, scan.best_lambda
    );
    match sink.format {
        Format::Csv => {
            sink.csv("experiment.csv", |buf| exp.write_csv(buf))?;
            sink.csv("lambda_scan.csv", |buf| scan.write_table_csv(buf))?;
            sink.csv("comparison_curves.csv", |buf| scan.write_curves_csv(buf))?;
        }
        Format::Json => sink.json("compare.json", &json!({ "experiment": exp, "scan": scan }))?,
    }
    Ok(())
}

pub fn scale(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let s = &cfg.scale;
    let m = scale_mapping(s.lambda, s.tau_th_over_tau0, s.tau_exp_ns)?;
    println!(
        "m a^2 = {:.4e} m_p a_0^2 (A Z = 479 * 254 = {:.4e})",
        m.ma2, m.az_reference
    );
    match sink.format {
        Format::Csv => sink.csv("scale.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["lambda", "tau_th_over_tau0", "tau_exp_ns", "ma2_mp_a0sq", "az_reference"])?;
            w.write_record([m.lambda, m.tau_th_over_tau0, m.tau_exp_ns, m.ma2, m.az_reference].iter().map(|v| sci(*v)))?;
            w.flush()?;
            Ok(())
        })?,
        Format::Json => sink.json("scale.json", &m)?,
    }
    Ok(())
}
