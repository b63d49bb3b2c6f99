use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zeno_rotor_cli::config::{parse_config, resolve, ConfigError, RunConfig};
use zeno_rotor_cli::run::{Meta, CLASSICAL_SERIES_FILE, META_FILE, SERIES_FILE};

const SERIES_HEADER: &str =
    "step,time,norm_deficit,mean_m,second_moment,participation_ratio,p_initial";

fn binary(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zeno-rotor"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn kicked_config(protocol: &str, output: &str, extra: &str) -> String {
    format!(
        "experiment = \"kicked\"\nseed = 11\nsteps = 40\n{extra}\n[physics]\nk = 5.0\n\
         [protocol]\nkind = \"{protocol}\"\n[ensemble]\ntrajectories = 12\n[output]\ndirectory = \"{output}\"\n"
    )
}

fn read_meta(dir: &Path) -> Meta {
    serde_json::from_str(&fs::read_to_string(dir.join(META_FILE)).unwrap()).unwrap()
}

#[test]
fn missing_kick_strength_is_named() {
    let err = parse_config("experiment = \"kicked\"\nseed = 1\nsteps = 5\n").unwrap_err();
    assert!(matches!(err, ConfigError::Missing { field: "k", .. }));
    assert!(err.to_string().contains("`k`"));
}

#[test]
fn missing_seed_is_named() {
    let err = parse_config("experiment = \"kicked\"\nsteps = 5\n[physics]\nk = 1.0\n").unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn unknown_protocol_kind_lists_valid_kinds() {
    let err = parse_config(
        "experiment = \"kicked\"\nseed = 1\nsteps = 5\n[physics]\nk = 1.0\n[protocol]\nkind = \"weekly\"\n",
    )
    .unwrap_err()
    .to_string();
    for kind in ["none", "full", "subset"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "experiment = \"kicked\"\nseed = 1\nsteps = 5\ncolour = 2\n[physics]\nk = 1.0\n",
        "experiment = \"kicked\"\nseed = 1\nsteps = 5\n[physics]\nk = 1.0\nmass = 3.0\n",
        "experiment = \"kicked\"\nseed = 1\nsteps = 5\n[physics]\nk = 1.0\n[protocol]\nkind = \"full\"\nrate = 2\n",
    ] {
        assert!(parse_config(text).is_err(), "{text}");
    }
}

#[test]
fn invalid_values_are_rejected() {
    let base = |physics: &str, rest: &str| {
        format!("experiment = \"kicked\"\nseed = 1\nsteps = 5\n{rest}\n[physics]\n{physics}\n")
    };
    assert!(parse_config(&base("k = -1.0", "")).is_err());
    assert!(parse_config(&base("k = 1.0\ntau = 0.0", "")).is_err());
    assert!(parse_config(&base("k = 1.0", "threads = 0")).is_err());
    assert!(parse_config(&format!(
        "{}[protocol]\nkind = \"subset\"\n",
        base("k = 1.0", "")
    ))
    .is_err());
    assert!(
        parse_config("experiment = \"classical\"\nseed = 1\nsteps = 5\n[physics]\nk = 1.0\n")
            .is_err()
    );
}

#[test]
fn resolved_config_round_trips_through_toml_and_json() {
    for text in [
        kicked_config("full", "out", "threads = 2"),
        "experiment = \"twolevel-zeno\"\nseed = 9\n[physics]\nn_values = [1, 4]\n".to_string(),
        "experiment = \"compare\"\nseed = 2\nsteps = 20\n[physics]\nk = 2.0\nh0 = { polynomial = [0.0, 0.1, 0.5] }\n\
         [numerics]\nbasis = 90\n[protocol]\nkind = \"subset\"\nsubset = [0, 1]\nperiod = 3\n"
            .to_string(),
    ] {
        let cfg = parse_config(&text).unwrap().config;
        let again = parse_config(&toml::to_string(&cfg).unwrap()).unwrap().config;
        assert_eq!(cfg, again);
        let json: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(resolve(json).unwrap().config, cfg);
    }
}

#[test]
fn kicked_run_writes_series_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let name = write_config(dir.path(), "run.toml", &kicked_config("full", "out", ""));
    let out = binary(&["run", &name], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = fs::read_to_string(dir.path().join("out").join(SERIES_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SERIES_HEADER);
    assert_eq!(lines.len() - 1, 41);
    assert!(csv.ends_with('\n'));

    let meta = read_meta(&dir.path().join("out"));
    let cfg = parse_config(&fs::read_to_string(dir.path().join("run.toml")).unwrap())
        .unwrap()
        .config;
    assert_eq!(meta.config, cfg);
    assert_eq!(meta.seed, 11);
    assert_eq!(meta.version, zeno_rotor::VERSION);
    assert!(meta.kernel_half_width.unwrap() > 0);
    assert!(meta.warnings.is_empty());
}

#[test]
fn measurement_delocalizes_relative_to_isolated_rotor() {
    let dir = tempfile::tempdir().unwrap();
    let final_m2 = |protocol: &str| {
        let text = kicked_config(protocol, protocol, "").replace("steps = 40", "steps = 300");
        let name = write_config(dir.path(), &format!("{protocol}.toml"), &text);
        assert!(binary(&["run", &name], dir.path()).status.success());
        read_meta(&dir.path().join(protocol))
            .summary
            .final_second_moment
            .unwrap()
    };
    assert!(final_m2("full") > final_m2("none"));
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["threads = 1", "threads = 1", "threads = 3"]
        .iter()
        .enumerate()
    {
        let out = format!("out{i}");
        let name = write_config(
            dir.path(),
            &format!("{out}.toml"),
            &kicked_config("full", &out, threads),
        );
        assert!(binary(&["run", &name], dir.path()).status.success());
        outputs.push(fs::read(dir.path().join(&out).join(SERIES_FILE)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn twolevel_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = \"twolevel-zeno\"\nseed = 5\n[physics]\nn_values = [1, 10, 100]\n\
                [ensemble]\ntrajectories = 20000\n";
    let name = write_config(dir.path(), "zeno.toml", text);
    assert!(binary(&["run", &name], dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("output").join(SERIES_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,p1_analytic,p1_mc,mc_sigma"));
    for (line, n) in lines.zip([1u64, 10, 100]) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let expected = 0.5 * (1.0 + (PI / n as f64).cos().powi(n as i32));
        assert_eq!(v[0], n as f64);
        assert!((v[1] - expected).abs() < 1e-12);
        assert!(
            (v[2] - expected).abs() <= 4.0 * v[3].max(1e-12),
            "n={n}: {line}"
        );
    }
}

#[test]
fn compare_writes_both_series() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = \"compare\"\nseed = 8\nsteps = 60\n[physics]\nk = 5.0\n[protocol]\nkind = \"full\"\n\
                [ensemble]\ntrajectories = 8\nparticles = 5000\n";
    let name = write_config(dir.path(), "cmp.toml", text);
    assert!(binary(&["run", &name], dir.path()).status.success());
    let out = dir.path().join("output");
    for file in [SERIES_FILE, CLASSICAL_SERIES_FILE] {
        let csv = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(csv.lines().next(), Some(SERIES_HEADER));
        assert_eq!(csv.lines().count(), 62);
    }
    let summary = read_meta(&out).summary;
    assert!(summary.classical_diffusion.unwrap() > 0.0);
    assert!(summary.break_time.is_some());
}

#[test]
fn basis_overflow_fails_with_remedy() {
    let dir = tempfile::tempdir().unwrap();
    let text = kicked_config("full", "out", "")
        .replace("[protocol]", "[numerics]\nbasis = 20\n[protocol]");
    let name = write_config(dir.path(), "small.toml", &text);
    let out = binary(&["run", &name], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("increase the basis half-width"), "{stderr}");
}

#[test]
fn resonance_warns_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let text = kicked_config("none", "out", "")
        .replace("k = 5.0", &format!("k = 1.0\ntau = {}", 4.0 * PI));
    let name = write_config(dir.path(), "res.toml", &text);
    let out = binary(&["run", &name], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(read_meta(&dir.path().join("out"))
        .warnings
        .iter()
        .any(|w| w.contains("resonance")));
}

#[test]
fn validate_reports_status() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.toml", &kicked_config("none", "out", ""));
    let out = binary(&["validate", &good], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("kernel_tol"));
    assert!(!dir.path().join("out").exists());

    let bad = write_config(
        dir.path(),
        "bad.toml",
        "experiment = \"kicked\"\nseed = 1\n",
    );
    let out = binary(&["validate", &bad], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    assert!(!binary(&["run", "missing.toml"], dir.path())
        .status
        .success());
}
