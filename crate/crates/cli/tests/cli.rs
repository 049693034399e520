use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use gravcollapse::quantity::HBAR;
use gravcollapse_cli::config::{parse_config, to_json, ConfigError};

const MINIMAL: &str = r#"{
  "distribution": {"kind": "gaussian", "mass": 1, "sigma": 1},
  "displacement": [3, 0, 0]
}"#;

const DEPHASE: &str = r#"{
  "distribution": {"kind": "gaussian", "mass": 1, "sigma": 1},
  "displacement": [2, 0, 0],
  "quadrature": {"cell_size": 0.5, "padding": 2},
  "stochastic": {"seed": 1, "steps": 10, "trajectories": 10000, "samples": 20000}
}"#;

const COLLAPSE: &str = r#"{"stochastic": {"seed": 42, "tau": 1, "samples": 100000}}"#;

struct Run {
    dir: PathBuf,
    out: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().expect("exited normally")
    }

    fn result(&self) -> Value {
        serde_json::from_str(&fs::read_to_string(self.dir.join("result.json")).unwrap()).unwrap()
    }

    fn csv(&self, name: &str) -> String {
        fs::read_to_string(self.dir.join(name)).unwrap()
    }

    fn stderr_json(&self) -> Value {
        let text = String::from_utf8(self.out.stderr.clone()).unwrap();
        serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
    }
}

fn run_in(tmp: &Path, sub: &str, config: &str, out: &str, threads: Option<&str>) -> Run {
    let cfg = tmp.join(format!("{out}.json"));
    fs::write(&cfg, config).unwrap();
    let dir = tmp.join(out);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gravcollapse"));
    cmd.arg(sub).arg("--config").arg(&cfg).arg("--out-dir").arg(&dir);
    match threads {
        Some(n) => cmd.env("GRAVCOLLAPSE_THREADS", n),
        None => cmd.env_remove("GRAVCOLLAPSE_THREADS"),
    };
    Run {
        dir,
        out: cmd.output().unwrap(),
    }
}

fn run(tmp: &TempDir, sub: &str, config: &str) -> Run {
    run_in(tmp.path(), sub, config, sub, None)
}

fn without_wall_clock(mut v: Value) -> Value {
    v["manifest"].as_object_mut().unwrap().remove("wall_clock");
    v
}

#[test]
fn config_examples() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.displacement, Some([3.0, 0.0, 0.0]));

    let bad = r#"{"distribution": {"kind": "gaussian", "mass": -1, "sigma": 1}, "colour": "red"}"#;
    let Err(ConfigError::Schema(v)) = parse_config(bad) else {
        panic!("negative mass accepted")
    };
    assert!(v.iter().any(|x| x.path == "distribution.mass"));
    assert!(v.iter().any(|x| x.path == "colour" && x.message.contains("colour")));
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let a = parse_config(&text).unwrap();
        assert_eq!(parse_config(&to_json(&a)).unwrap(), a);
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn rate_reports_energy_rate_lifetime_and_convention() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "rate", MINIMAL);
    assert_eq!(r.code(), 0);
    let v = r.result();
    let res = &v["result"];
    let (e, lambda, tau) = (
        res["e_delta"].as_f64().unwrap(),
        res["lambda"].as_f64().unwrap(),
        res["tau"].as_f64().unwrap(),
    );
    assert!(((lambda * HBAR - e) / e).abs() < 1e-12);
    assert!((lambda * tau - 1.0).abs() < 1e-12);
    assert_eq!(res["convention"], "minimal-decoherence-half");
    assert_eq!(v["manifest"]["conventions"]["rate"], "minimal-decoherence-half");
    let csv = r.csv("rate.csv");
    assert!(csv.starts_with("d_m,e_delta_J,lambda_per_s,tau_s,relative_error\r\n"));
}

#[test]
fn zero_separation_gives_infinite_lifetime() {
    let tmp = TempDir::new().unwrap();
    let cfg = MINIMAL.replace("[3, 0, 0]", "[0, 0, 0]");
    let r = run(&tmp, "rate", &cfg);
    assert_eq!(r.code(), 0);
    let v = r.result();
    assert_eq!(v["result"]["lambda"], 0.0);
    assert!(v["result"]["tau"].is_null());
    let csv = r.csv("rate.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "inf");
}

#[test]
fn validation_errors_exit_one_with_all_paths() {
    let tmp = TempDir::new().unwrap();
    let r = run(
        &tmp,
        "rate",
        r#"{"colour": 1, "distribution": {"kind": "gaussian", "mass": -1, "sigma": 0}}"#,
    );
    assert_eq!(r.code(), 1);
    let e = r.stderr_json();
    assert_eq!(e["error"]["kind"], "validation");
    let paths: Vec<&str> = e["error"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["path"].as_str().unwrap())
        .collect();
    assert_eq!(paths, ["colour", "distribution.mass", "distribution.sigma"]);
    assert!(!r.dir.join("result.json").exists());
}

#[test]
fn syntax_errors_exit_one_with_position() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "rate", "{\n  \"displacement\": [1, 2,\n}");
    assert_eq!(r.code(), 1);
    assert_eq!(r.stderr_json()["error"]["line"], 3);
}

#[test]
fn stochastic_subcommands_require_a_seed() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "collapse-mc", r#"{"stochastic": {"tau": 1}}"#);
    assert_eq!(r.code(), 1);
    assert!(r.stderr_json()["error"]["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn missing_section_and_bad_arguments_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&tmp, "testmass", MINIMAL).code(), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_gravcollapse")).arg("rate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_gravcollapse"))
        .args(["rate", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_thread_cap_exits_one() {
    let tmp = TempDir::new().unwrap();
    let r = run_in(tmp.path(), "rate", MINIMAL, "rate", Some("zero"));
    assert_eq!(r.code(), 1);
}

#[test]
fn unsettled_kernel_tail_exits_two() {
    let tmp = TempDir::new().unwrap();
    let r = run(
        &tmp,
        "planck-limit",
        r#"{"planck": {"r_values": [1], "c_values": [100], "tolerance": 1e-14}}"#,
    );
    assert_eq!(r.code(), 2);
    assert_eq!(r.stderr_json()["error"]["kind"], "numeric");
}

#[test]
fn failing_oracle_exits_two_and_still_writes_results() {
    let tmp = TempDir::new().unwrap();
    // Coarse cells and a 2σ truncation put the grid energy ~9% low.
    let r = run(&tmp, "oracle", DEPHASE);
    assert_eq!(r.code(), 2);
    let v = r.result();
    assert_eq!(v["result"]["all_pass"], false);
    let csv = r.csv("oracle.csv");
    assert!(csv.contains("e_delta_bruteforce_vs_e_delta,false"));
    assert!(csv.contains("noise_covariance_times_dt,true"));
}

#[test]
fn oversized_grids_exit_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = DEPHASE.replace(r#""padding": 2"#, r#""padding": 2, "max_cells": 10"#);
    let r = run(&tmp, "dephase", &cfg);
    assert_eq!(r.code(), 3);
    assert_eq!(r.stderr_json()["error"]["kind"], "resource");
}

#[test]
fn unwritable_output_exits_three() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("rate");
    fs::write(&blocker, "not a directory").unwrap();
    let r = run(&tmp, "rate", MINIMAL);
    assert_eq!(r.code(), 3);
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    for (sub, cfg, tables) in [
        ("collapse-mc", COLLAPSE, &["outcomes.csv"][..]),
        ("dephase", DEPHASE, &["variance_curve.csv", "decoherence_curve.csv"][..]),
    ] {
        let a = run_in(tmp.path(), sub, cfg, &format!("{sub}-a"), Some("1"));
        let b = run_in(tmp.path(), sub, cfg, &format!("{sub}-b"), Some("4"));
        let c = run_in(tmp.path(), sub, cfg, &format!("{sub}-c"), None);
        for r in [&a, &b, &c] {
            assert_eq!(r.code(), 0);
        }
        for t in tables {
            assert_eq!(a.csv(t), b.csv(t), "{sub} {t}");
            assert_eq!(a.csv(t), c.csv(t), "{sub} {t}");
        }
        let ja = without_wall_clock(a.result());
        assert_eq!(ja, without_wall_clock(b.result()));
        assert_eq!(ja, without_wall_clock(c.result()));
    }
}

#[test]
fn dephasing_slope_matches_twice_the_oracle_rate() {
    let tmp = TempDir::new().unwrap();
    let d = run(&tmp, "dephase", DEPHASE);
    assert_eq!(d.code(), 0);
    let o = run(&tmp, "oracle", DEPHASE);
    let brute = o.result()["result"]["e_delta_bruteforce"].as_f64().unwrap();
    let slope = d.result()["result"]["fitted_slope"].as_f64().unwrap();
    let ratio = slope / (2.0 * brute / HBAR);
    assert!((ratio - 1.0).abs() < 0.05, "slope ratio {ratio}");
}

#[test]
fn collapse_statistics_fall_in_three_sigma_bands() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "collapse-mc", COLLAPSE);
    assert_eq!(r.code(), 0);
    let v = r.result();
    assert_eq!(v["manifest"]["seed"], 42);
    let f = v["result"]["branch_one_fraction"].as_f64().unwrap();
    let t = v["result"]["mean_time"].as_f64().unwrap();
    assert!((f - 0.5).abs() <= 0.0047);
    assert!((t - 1.0).abs() <= 0.01);
    assert_eq!(r.csv("outcomes.csv").lines().count(), 100_001);
}

#[test]
fn sweep_testmass_and_planck_tables_carry_units() {
    let tmp = TempDir::new().unwrap();
    let s = run(
        &tmp,
        "sweep",
        r#"{"distribution": {"kind": "uniform-sphere", "mass": 1, "radius": 1},
            "displacement": [1, 0, 0], "sweep": {"separations": [0, 1, 3]}, "tradeoff": {"a": 4, "b": 1}}"#,
    );
    assert_eq!(s.code(), 0);
    assert_eq!(s.csv("sweep.csv").lines().count(), 4);
    assert_eq!(s.result()["result"]["tradeoff"]["gamma"], 0.5);

    let t = run(&tmp, "testmass", r#"{"testmass": {"mass": 1e-14, "r": 1e-6, "t": 1, "g": 9.81}}"#);
    assert_eq!(t.code(), 0);
    assert!(t.csv("testmass.csv").starts_with("mass_kg,r_m,t_s,volume_m3,"));
    assert_eq!(t.result()["result"]["unruh"]["with-c"]["difference"], "0");

    let p = run(
        &tmp,
        "planck-limit",
        r#"{"planck": {"r_values": [1, 2], "c_values": [1000, 2000], "dt_separations": [0]}}"#,
    );
    assert_eq!(p.code(), 0);
    assert!(p.csv("newtonian_limit.csv").starts_with("r_m,c_m_per_s,"));
    let v = p.result();
    for row in v["result"]["transform"].as_array().unwrap() {
        assert!(row["relative_error"].as_f64().unwrap() < 0.05);
    }
}
