use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn deltashell(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deltashell"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn scale_writes_csv_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = deltashell(dir.path(), &["scale"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("scale.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "lambda,tau_th_over_tau0,tau_exp_ns,ma2_mp_a0sq,az_reference");
    let ma2: f64 = lines.next().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((ma2 / 1.2e5 - 1.0).abs() < 0.05, "m a^2 = {ma2}");

    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("scale.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["file"], "scale.csv");
    let meta = &meta["provenance"];
    let hash = meta["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(meta["command"], "scale");
    assert_eq!(meta["config"]["scale"]["lambda"], 3.6);
}

#[test]
fn json_format_embeds_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = deltashell(dir.path(), &["--format", "json", "poles", "--lambda", "1,3.6", "--count", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("poles.json")).unwrap()).unwrap();
    assert_eq!(doc["provenance"]["command"], "poles");
    assert!(doc["result"].is_array() || doc["result"].is_object());
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = deltashell(dir.path(), &["scale", "--tau-exp-ns", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["code"], 2);

    let out = deltashell(dir.path(), &["poles", "--lambda", "-3"]);
    assert_eq!(out.status.code(), Some(2));

    let out = deltashell(dir.path(), &["survival", "--points", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = deltashell(dir.path(), &["fit", "--input", "no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_of(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("no/such/file.csv"), "{msg}");

    let out = deltashell(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("broken.csv");
    fs::write(&input, "t,p_total\n1.0,0.9\n2.0,oops\n").unwrap();
    let out = deltashell(dir.path(), &["fit", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = error_of(&out);
    assert_eq!(err["error"]["kind"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"), "{err}");

    let exp = dir.path().join("experiment.csv");
    fs::write(&exp, "t_ns,intensity\n1,1\n2,0.5\n").unwrap();
    let out = deltashell(dir.path(), &["compare", "--input", exp.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[model]\nlambdas = [3.6]\nwidth = 2\n").unwrap();
    let out = deltashell(dir.path(), &["--config", cfg.to_str().unwrap(), "poles"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = deltashell(dir.path(), &["--dump-config", "poles", "--lambda", "2.5", "--count", "4"]);
    assert!(out.status.success());
    let cfg = dir.path().join("dumped.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    let again = deltashell(dir.path(), &["--config", cfg.to_str().unwrap(), "--dump-config", "poles"]);
    assert!(again.status.success());
    assert_eq!(out.stdout, again.stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lambdas = [2.5]"), "{text}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--jobs", "1", "decompose", "--lambda", "3.6", "--points", "40", "--t-max", "100"];
    assert!(deltashell(a.path(), &args).status.success());
    assert!(deltashell(b.path(), &args).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4, "{names:?}");
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn survival_output_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = deltashell(dir.path(), &["survival", "--lambda", "3.6", "--points", "300"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = dir.path().join("survival_lambda3.6.csv");
    let header = fs::read_to_string(&series).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,t_over_tau0,p_total,p_bg,p_poles,p_interf,err_est");

    let fits = dir.path().join("fits");
    let out = deltashell(&fits, &["--format", "json", "fit", "--lambda", "3.6", "--input", series.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::read_dir(&fits)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "json"))
        .expect("fit json written");
    let doc: Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    let ratio = doc["result"]["tau_fit"].as_f64().unwrap() / doc["result"]["tau_pole"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.02, "tau_fit / tau_pole = {ratio}");
}
