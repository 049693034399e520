//! The subcommands. Each turns a validated configuration into a result
//! document and a set of CSV tables.

use serde_json::{json, Map, Value};

use gravcollapse::mass::SuperpositionScenario;
use gravcollapse::planck::{conformal_kernel, newtonian_limit_check, newtonian_transform};
use gravcollapse::quantity::{G, HBAR};
use gravcollapse::rate::{collapse_rate, sweep_separation, tradeoff_minimum};
use gravcollapse::self_energy::{e_delta, e_delta_bruteforce, QuadratureSettings};
use gravcollapse::stochastic::{collapse_mc, dephasing_sim, sample_noise_lane, NoiseGrid};
use gravcollapse::testmass::{
    freefall_phase, gravity_g_uncertainty, optimal_precision, optimal_testmass, quantum_g_uncertainty,
    retention_time, self_consistent_time, unruh_check, FourVolume, TestMassConfig, UnruhReport,
};
use gravcollapse::Error;

use crate::config::{PlanckConfig, ScenarioConfig, StochasticConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};

pub const DEFAULT_STEPS: usize = 10;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_NOISE_DT: f64 = 1e-3;
/// Relative agreement demanded of the brute-force energy.
pub const ORACLE_ENERGY_REL: f64 = 2e-2;
/// Width of the sample-statistics bands, in standard errors.
pub const ORACLE_SIGMAS: f64 = 3.0;
/// RNG lane of the oracle noise draws; collapse outcomes use lanes `0..n`.
const NOISE_LANE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Rate,
    Sweep,
    Dephase,
    CollapseMc,
    Testmass,
    PlanckLimit,
    Oracle,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Rate => "rate",
            Subcommand::Sweep => "sweep",
            Subcommand::Dephase => "dephase",
            Subcommand::CollapseMc => "collapse-mc",
            Subcommand::Testmass => "testmass",
            Subcommand::PlanckLimit => "planck-limit",
            Subcommand::Oracle => "oracle",
        }
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub tables: Vec<Table>,
    pub seed: Option<u64>,
    pub conventions: Map<String, Value>,
    pub error_estimates: Map<String, Value>,
    /// Set when the run completed but a check failed; files are still written.
    pub failure: Option<CliError>,
}

impl Outcome {
    fn new(result: Value) -> Self {
        Self {
            result,
            tables: Vec::new(),
            seed: None,
            conventions: Map::new(),
            error_estimates: Map::new(),
            failure: None,
        }
    }
}

fn missing(section: &str, sub: Subcommand) -> CliError {
    CliError::validation(format!("`{}` needs the \"{section}\" section", sub.name()))
}

fn scenario(cfg: &ScenarioConfig, sub: Subcommand) -> Result<(SuperpositionScenario, QuadratureSettings), CliError> {
    let rho = cfg.distribution.clone().ok_or_else(|| missing("distribution", sub))?;
    let d = cfg.displacement.ok_or_else(|| missing("displacement", sub))?;
    let q = cfg.quadrature.clone().unwrap_or_default().resolve(&rho);
    q.validate()?;
    Ok((SuperpositionScenario::new(rho, d)?, q))
}

fn stochastic(cfg: &ScenarioConfig, sub: Subcommand) -> Result<(&StochasticConfig, u64), CliError> {
    let st = cfg.stochastic.as_ref().ok_or_else(|| missing("stochastic", sub))?;
    let seed = st
        .seed
        .ok_or_else(|| CliError::validation(format!("`{}` needs stochastic.seed", sub.name())))?;
    Ok((st, seed))
}

fn scenario_conventions(out: &mut Outcome, s: &SuperpositionScenario, q: &QuadratureSettings) {
    out.conventions.insert("rate".into(), json!(s.convention));
    out.conventions.insert("self_term".into(), json!(q.self_term));
}

pub fn run(sub: Subcommand, cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    match sub {
        Subcommand::Rate => rate(cfg),
        Subcommand::Sweep => sweep(cfg),
        Subcommand::Dephase => dephase(cfg),
        Subcommand::CollapseMc => collapse(cfg),
        Subcommand::Testmass => testmass(cfg),
        Subcommand::PlanckLimit => planck_limit(cfg),
        Subcommand::Oracle => oracle(cfg),
    }
}

const RATE_HEADER: &[&str] = &["d_m", "e_delta_J", "lambda_per_s", "tau_s", "relative_error"];

fn rate(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let (s, q) = scenario(cfg, Subcommand::Rate)?;
    let r = collapse_rate(&s, &q)?;
    let mut t = Table::new("rate", RATE_HEADER);
    t.push(vec![
        Cell::Num(s.separation()),
        Cell::Num(r.e_delta),
        Cell::Num(r.lambda),
        Cell::or_inf(r.tau),
        Cell::Num(r.relative_error),
    ]);
    let mut out = Outcome::new(serde_json::to_value(&r).expect("report serializes"));
    scenario_conventions(&mut out, &s, &q);
    out.error_estimates.insert("e_delta_relative".into(), json!(r.relative_error));
    out.tables.push(t);
    Ok(out)
}

fn sweep(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let (s, q) = scenario(cfg, Subcommand::Sweep)?;
    let ds = &cfg.sweep.as_ref().ok_or_else(|| missing("sweep", Subcommand::Sweep))?.separations;
    let rows = sweep_separation(&s, ds, &q)?;
    let mut t = Table::new("sweep", RATE_HEADER);
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max(r.relative_error);
        t.push(vec![
            Cell::Num(r.d),
            Cell::Num(r.e_delta),
            Cell::Num(r.lambda),
            Cell::or_inf(r.tau),
            Cell::Num(r.relative_error),
        ]);
    }
    let mut result = json!({ "rows": rows });
    if let Some(tr) = &cfg.tradeoff {
        let (gamma, value) = tradeoff_minimum(tr.a, tr.b)?;
        result["tradeoff"] = json!({ "a": tr.a, "b": tr.b, "gamma": gamma, "minimum": value });
    }
    let mut out = Outcome::new(result);
    scenario_conventions(&mut out, &s, &q);
    out.error_estimates.insert("e_delta_relative_max".into(), json!(worst));
    out.tables.push(t);
    Ok(out)
}

fn dephase(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sub = Subcommand::Dephase;
    let (s, q) = scenario(cfg, sub)?;
    let (st, seed) = stochastic(cfg, sub)?;
    let steps = st.steps.unwrap_or(DEFAULT_STEPS);
    let trajectories = st.trajectories.unwrap_or(DEFAULT_TRAJECTORIES);
    let total_time = match (st.total_time, st.dt) {
        (Some(t), _) => t,
        (None, Some(dt)) => dt * steps as f64,
        (None, None) => {
            // Two lifetimes of the grid rate.
            let e = e_delta_bruteforce(&s, &q)?;
            if e <= 0.0 {
                return Err(CliError::validation(
                    "zero rate: give stochastic.total_time or stochastic.dt",
                ));
            }
            2.0 * HBAR / e
        }
    };
    let run = dephasing_sim(&s, &q, total_time, steps, trajectories, seed)?;
    let mut var = Table::new("variance_curve", &["t_s", "variance_rad2"]);
    for (t, v) in &run.variance_curve {
        var.push(vec![Cell::Num(*t), Cell::Num(*v)]);
    }
    let mut dec = Table::new("decoherence_curve", &["t_s", "mean_cos", "stderr", "exp_minus_lambda_t"]);
    for p in &run.decoherence_curve {
        dec.push(vec![
            Cell::Num(p.t),
            Cell::Num(p.mean_cos),
            Cell::Num(p.stderr),
            Cell::Num((-run.lambda_grid * p.t).exp()),
        ]);
    }
    let worst_sigma = run
        .decoherence_curve
        .iter()
        .filter(|p| p.stderr > 0.0)
        .map(|p| ((p.mean_cos - (-run.lambda_grid * p.t).exp()) / p.stderr).abs())
        .fold(0.0, f64::max);
    let mut out = Outcome::new(json!({
        "fitted_slope": run.fitted_slope,
        "lambda_grid": run.lambda_grid,
        "slope_ratio": run.slope_ratio(),
        "total_time": total_time,
        "dt": run.dt,
        "steps": run.steps,
        "trajectories": run.trajectories,
        "cells": run.cells,
        "jitter": run.jitter,
        "worst_decoherence_deviation_stderr": worst_sigma,
    }));
    out.seed = Some(seed);
    scenario_conventions(&mut out, &s, &q);
    out.conventions.insert("variance".into(), json!("second-moment"));
    out.error_estimates.insert("factor_jitter".into(), json!(run.jitter));
    out.error_estimates
        .insert("slope_stderr_relative".into(), json!((2.0 / trajectories as f64).sqrt()));
    out.tables.push(var);
    out.tables.push(dec);
    Ok(out)
}

/// `stochastic.tau`, or the lifetime of the configured scenario.
fn lifetime(cfg: &ScenarioConfig, st: &StochasticConfig, sub: Subcommand) -> Result<f64, CliError> {
    if let Some(tau) = st.tau {
        return Ok(tau);
    }
    if cfg.distribution.is_none() {
        return Err(CliError::validation(format!(
            "`{}` needs stochastic.tau or a scenario",
            sub.name()
        )));
    }
    let (s, q) = scenario(cfg, sub)?;
    collapse_rate(&s, &q)?
        .tau
        .ok_or_else(|| CliError::validation("scenario has zero rate, so its lifetime is infinite"))
}

fn collapse(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sub = Subcommand::CollapseMc;
    let (st, seed) = stochastic(cfg, sub)?;
    let tau = lifetime(cfg, st, sub)?;
    let n = st.samples.unwrap_or(DEFAULT_SAMPLES);
    let e = collapse_mc(tau, n, seed)?;
    let mut t = Table::new("outcomes", &["index", "branch", "time_s"]);
    for (i, o) in e.outcomes.iter().enumerate() {
        t.push(vec![Cell::Int(i as u64), Cell::Int(o.branch.index().into()), Cell::Num(o.time)]);
    }
    let mut out = Outcome::new(json!({
        "tau": tau,
        "samples": n,
        "branch_one_fraction": e.branch_one_fraction(),
        "mean_time": e.mean_time(),
    }));
    out.seed = Some(seed);
    let nf = n as f64;
    out.error_estimates.insert("branch_one_fraction_stderr".into(), json!(0.5 / nf.sqrt()));
    out.error_estimates.insert("mean_time_stderr".into(), json!(tau / nf.sqrt()));
    out.tables.push(t);
    Ok(out)
}

fn unruh_json(r: &UnruhReport) -> Value {
    json!({
        "lhs_c_exponent": r.lhs_c_exponent.to_string(),
        "rhs_c_exponent": r.rhs_c_exponent.to_string(),
        "difference": r.difference.to_string(),
        "dims_match": r.dims_match,
        "reduced_dims_match": r.reduced_dims_match,
    })
}

fn testmass(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let tm = cfg.testmass.as_ref().ok_or_else(|| missing("testmass", Subcommand::Testmass))?;
    let c = TestMassConfig {
        mass: tm.mass,
        r: tm.r,
        t: tm.t,
        volume: tm.volume,
    };
    c.validate()?;
    let dq = quantum_g_uncertainty(&c);
    let dg = gravity_g_uncertainty(&c);
    let m_opt = optimal_testmass(c.r, c.t);
    let precision = optimal_precision(c.volume(), c.t);
    let retention = retention_time(c.mass, c.r);
    let sc = self_consistent_time(c.r)?;
    let phase = tm.g.map(|g| freefall_phase(c.mass, g, c.t)).transpose()?;

    let mut t = Table::new(
        "testmass",
        &[
            "mass_kg",
            "r_m",
            "t_s",
            "volume_m3",
            "quantum_dg_m_per_s2",
            "gravity_dg_m_per_s2",
            "optimal_mass_kg",
            "optimal_precision_m_per_s2",
            "retention_time_s",
            "self_consistent_t_s",
            "self_consistent_mass_kg",
            "freefall_phase_rad",
        ],
    );
    t.push(vec![
        Cell::Num(c.mass),
        Cell::Num(c.r),
        Cell::Num(c.t),
        Cell::Num(c.volume()),
        Cell::Num(dq),
        Cell::Num(dg),
        Cell::Num(m_opt),
        Cell::Num(precision),
        Cell::Num(retention),
        Cell::Num(sc.t),
        Cell::Num(sc.mass),
        phase.map_or(Cell::Empty, Cell::Num),
    ]);
    let mut unruh = Table::new(
        "unruh",
        &["substitution", "lhs_c_exponent", "rhs_c_exponent", "difference", "dims_match"],
    );
    let mut checks = Map::new();
    for (name, fv) in [("with-c", FourVolume::WithC), ("without-c", FourVolume::WithoutC)] {
        let r = unruh_check(fv);
        unruh.push(vec![
            Cell::Text(name.into()),
            Cell::Text(r.lhs_c_exponent.to_string()),
            Cell::Text(r.rhs_c_exponent.to_string()),
            Cell::Text(r.difference.to_string()),
            Cell::Bool(r.dims_match),
        ]);
        checks.insert(name.into(), unruh_json(&r));
    }
    let mut out = Outcome::new(json!({
        "input": c,
        "quantum_g_uncertainty": dq,
        "gravity_g_uncertainty": dg,
        "optimal_testmass": m_opt,
        "optimal_precision": precision,
        "retention_time": retention,
        "self_consistent": sc,
        "freefall_phase": phase,
        "unruh": checks,
    }));
    out.error_estimates.insert("self_consistent_residual".into(), json!(sc.residual));
    out.tables.push(t);
    out.tables.push(unruh);
    Ok(out)
}

fn planck_limit(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let pc: &PlanckConfig = cfg.planck.as_ref().ok_or_else(|| missing("planck", Subcommand::PlanckLimit))?;
    let ks = pc.settings();
    ks.validate()?;
    let table = newtonian_limit_check(&pc.r_values, &pc.c_values, &ks)?;
    let mut limit = Table::new(
        "newtonian_limit",
        &[
            "r_m",
            "c_m_per_s",
            "hh_integrated_s",
            "phi_integrated_J2_s_per_kg2",
            "ratio",
            "normalized",
            "tail_estimate",
        ],
    );
    let mut worst_tail: f64 = 0.0;
    for row in &table.rows {
        worst_tail = worst_tail.max(row.tail_estimate);
        limit.push(vec![
            Cell::Num(row.r),
            Cell::Num(row.c),
            Cell::Num(row.hh_integrated),
            Cell::Num(row.phi_integrated),
            Cell::Num(row.ratio),
            Cell::Num(row.normalized),
            Cell::Num(row.tail_estimate),
        ]);
    }

    let mut transform = Table::new(
        "transform",
        &["r_m", "k_end_per_m", "value_per_m", "oracle_per_m", "relative_error", "tail_estimate"],
    );
    let mut transforms = Vec::new();
    for &r in &pc.r_values {
        let kv = newtonian_transform(r, &ks)?;
        let oracle = 1.0 / (4.0 * std::f64::consts::PI * r);
        let rel = (kv.value - oracle).abs() / oracle;
        transform.push(vec![
            Cell::Num(r),
            Cell::Num(kv.k_end),
            Cell::Num(kv.value),
            Cell::Num(oracle),
            Cell::Num(rel),
            Cell::Num(kv.tail_estimate),
        ]);
        transforms.push(json!({ "r": r, "value": kv.value, "oracle": oracle, "relative_error": rel, "k_end": kv.k_end }));
    }

    let mut pointwise = Table::new(
        "pointwise_kernel",
        &["r_m", "c_m_per_s", "dt_sep_s", "hh", "tail_estimate", "converged", "message"],
    );
    let mut points = Vec::new();
    for &tau in &pc.dt_separations {
        for &r in &pc.r_values {
            for &c in &pc.c_values {
                match conformal_kernel(r, tau, c, &ks) {
                    Ok(kv) => {
                        pointwise.push(vec![
                            Cell::Num(r),
                            Cell::Num(c),
                            Cell::Num(tau),
                            Cell::Num(kv.value),
                            Cell::Num(kv.tail_estimate),
                            Cell::Bool(true),
                            Cell::Empty,
                        ]);
                        points.push(json!({ "r": r, "c": c, "dt_sep": tau, "value": kv.value, "converged": true }));
                    }
                    Err(Error::Numeric(msg)) => {
                        pointwise.push(vec![
                            Cell::Num(r),
                            Cell::Num(c),
                            Cell::Num(tau),
                            Cell::Empty,
                            Cell::Empty,
                            Cell::Bool(false),
                            Cell::Text(msg.clone()),
                        ]);
                        points.push(json!({ "r": r, "c": c, "dt_sep": tau, "value": null, "converged": false, "message": msg }));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }

    let mut out = Outcome::new(json!({
        "settings": ks,
        "newtonian_limit": table,
        "expected_ratio": 1.0 / (16.0 * std::f64::consts::PI * (1.0 + ks.theta_width * ks.theta_width)),
        "transform": transforms,
        "pointwise": points,
    }));
    out.conventions.insert("propagator".into(), json!("v/(v^2+eps^2)"));
    out.conventions.insert("time_window".into(), json!("gaussian"));
    out.error_estimates.insert("tail_estimate_max".into(), json!(worst_tail));
    out.tables.push(limit);
    out.tables.push(transform);
    if !pc.dt_separations.is_empty() {
        out.tables.push(pointwise);
    }
    Ok(out)
}

struct Assertion {
    name: &'static str,
    value: f64,
    reference: f64,
    /// Largest accepted `|value - reference|`.
    tolerance: f64,
}

impl Assertion {
    fn pass(&self) -> bool {
        (self.value - self.reference).abs() <= self.tolerance
    }
}

fn oracle(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let sub = Subcommand::Oracle;
    let (s, q) = scenario(cfg, sub)?;
    let (st, seed) = stochastic(cfg, sub)?;
    let n = st.samples.unwrap_or(DEFAULT_SAMPLES);
    if n < 2 {
        return Err(CliError::validation("oracle needs stochastic.samples >= 2"));
    }
    let nf = n as f64;
    let mut checks = Vec::new();

    let fast = e_delta(&s, &q)?;
    let brute = e_delta_bruteforce(&s, &q)?;
    checks.push(Assertion {
        name: "e_delta_bruteforce_vs_e_delta",
        value: brute,
        reference: fast.value,
        tolerance: ORACLE_ENERGY_REL * fast.value.abs(),
    });

    let tau = match st.tau {
        Some(t) => Some(t),
        None => (fast.value > 0.0).then(|| HBAR / fast.value),
    };
    if let Some(tau) = tau {
        let e = collapse_mc(tau, n, seed)?;
        checks.push(Assertion {
            name: "collapse_branch_one_fraction",
            value: e.branch_one_fraction(),
            reference: 0.5,
            tolerance: ORACLE_SIGMAS * 0.5 / nf.sqrt(),
        });
        checks.push(Assertion {
            name: "collapse_mean_time_s",
            value: e.mean_time(),
            reference: tau,
            tolerance: ORACLE_SIGMAS * tau / nf.sqrt(),
        });
    }

    let r = if s.separation() > 0.0 { s.separation() } else { 1.0 };
    let dt = st.dt.unwrap_or(DEFAULT_NOISE_DT);
    let grid = NoiseGrid::from_points(vec![[0.0; 3], [r, 0.0, 0.0]], q.cell_size, q.self_term.coefficient())?;
    let products: Vec<f64> = (0..n as u64)
        .map(|step| {
            let x = sample_noise_lane(&grid, dt, seed, NOISE_LANE, step)?;
            Ok(x[0] * x[1] * dt)
        })
        .collect::<Result<_, Error>>()?;
    let mean = products.iter().sum::<f64>() / nf;
    let var = products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    checks.push(Assertion {
        name: "noise_covariance_times_dt",
        value: mean,
        reference: HBAR * G / r,
        tolerance: ORACLE_SIGMAS * (var / nf).sqrt(),
    });

    let mut t = Table::new("oracle", &["assertion", "pass", "value", "reference", "tolerance"]);
    let mut list = Vec::new();
    let mut failed = Vec::new();
    for a in &checks {
        let pass = a.pass();
        if !pass {
            failed.push(a.name);
        }
        t.push(vec![
            Cell::Text(a.name.into()),
            Cell::Bool(pass),
            Cell::Num(a.value),
            Cell::Num(a.reference),
            Cell::Num(a.tolerance),
        ]);
        list.push(json!({
            "assertion": a.name,
            "pass": pass,
            "value": a.value,
            "reference": a.reference,
            "tolerance": a.tolerance,
        }));
    }
    let mut out = Outcome::new(json!({
        "e_delta": fast.value,
        "e_delta_bruteforce": brute,
        "lambda_bruteforce": brute / HBAR,
        "noise_separation": r,
        "noise_dt": dt,
        "samples": n,
        "assertions": list,
        "all_pass": failed.is_empty(),
    }));
    out.seed = Some(seed);
    scenario_conventions(&mut out, &s, &q);
    out.error_estimates.insert("e_delta_relative".into(), json!(fast.relative_error));
    out.tables.push(t);
    if !failed.is_empty() {
        out.failure = Some(CliError::numeric(format!("oracle assertions failed: {}", failed.join(", "))));
    }
    Ok(out)
}
