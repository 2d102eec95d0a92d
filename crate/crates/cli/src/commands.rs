//! One function per subcommand: run the experiment, write its artefacts,
//! return the gates and a JSON summary.

use std::path::Path;

use kpz_core::drivers::{sample_replica, summarize};
use kpz_core::renorm::{renorm_values, richardson};
use kpz_core::replicas::run_replicas;
use kpz_core::sbe::{
    drift_experiment, energy_identity_residual, final_snapshots, invariance_z_test, simulate, Trajectory,
};
use kpz_core::tensor::{analyze, hat_transform, is_trilinear, verify_cole_hopf};
use kpz_core::{Scheme, SpectralField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, DriftSpec, InvarianceSpec};
use crate::output::{physical_rows, write_csv, write_dump, write_table};
use crate::report::{write_json, TestOutcome};
use crate::CliError;

pub type Outcome = (Vec<TestOutcome>, Value);

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialise")
}

pub fn check_tensor(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let t = cfg.tensor()?;
    let dp = cfg.diffusion(t.dim())?;
    let check = cfg.check.clone().unwrap_or(crate::config::CheckSpec {
        rel_tol: kpz_core::tensor::DEFAULT_REL_TOL,
        expect_trilinear: None,
        expect_no_log: None,
        cole_hopf: None,
    });
    let report = analyze(&t, &dp, check.rel_tol)?;
    write_json(&out.join("tensor_report.json"), &report)?;
    let mut tests = Vec::new();
    if let Some(e) = check.expect_trilinear {
        tests.push(TestOutcome::expect("trilinear", report.is_trilinear, e));
    }
    if let Some(e) = check.expect_no_log {
        tests.push(TestOutcome::expect("no_log", report.satisfies_no_log, e));
    }
    if report.is_trilinear {
        let scale = report.f_matrix.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
        tests.push(TestOutcome::at_most("f_equals_g", report.f_minus_g_max, check.rel_tol * (1.0 + scale)));
    }
    let mut cole_hopf = Value::Null;
    if let Some(ch) = &check.cole_hopf {
        let ok = verify_cole_hopf(&t, &ch.matrix()?, ch.tol)?;
        tests.push(TestOutcome::expect("cole_hopf", ok, ch.expect));
        cole_hopf = json!(ok);
    }
    Ok((tests, json!({ "tensor": to_value(&report), "cole_hopf": cole_hopf })))
}

#[derive(Serialize)]
struct RenormRow {
    eps: f64,
    c_eps: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "C_tilde")]
    c_tilde: f64,
    #[serde(rename = "D_tilde")]
    d_tilde: f64,
    #[serde(rename = "C_plus_2D")]
    c_plus_2d: f64,
    #[serde(rename = "trunc_K")]
    trunc_k: usize,
    trunc_err: f64,
}

pub fn renorm(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.renorm, "renorm")?;
    if sec.eps.is_empty() {
        return Err(CliError::Schema("renorm.eps must list at least one value".into()));
    }
    let kind = cfg.mollifier.kind;
    let values = sec.eps.iter().map(|&e| renorm_values(&kind, e, sec.tol)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<RenormRow> = values
        .iter()
        .map(|v| RenormRow {
            eps: v.eps,
            c_eps: v.c_eps,
            c: v.c_big,
            d: v.d_big,
            c_tilde: v.c_tilde,
            d_tilde: v.d_tilde,
            c_plus_2d: v.c_plus_2d(),
            trunc_k: v.truncation_k,
            trunc_err: v.est_truncation_error,
        })
        .collect();
    write_csv(&out.join("renorm.csv"), &rows)?;
    let mut tests: Vec<TestOutcome> = values
        .iter()
        .map(|v| {
            TestOutcome::at_most(
                format!("tilde_cancellation[eps={}]", v.eps),
                v.c_tilde_plus_2d_tilde().abs(),
                sec.cancellation_rel_tol * v.c_tilde.abs() + v.est_truncation_error,
            )
        })
        .collect();
    let mut extrapolated = Value::Null;
    if values.len() >= 2 {
        let mut by_eps: Vec<_> = values.iter().map(|v| (v.eps, v.c_plus_2d())).collect();
        by_eps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n = by_eps.len();
        let r = richardson(by_eps[n - 2], by_eps[n - 1], sec.richardson_order);
        tests.push(TestOutcome::at_most("c_plus_2d_limit", (r + 1.0 / 12.0).abs(), sec.limit_tol));
        extrapolated = json!(r);
    }
    Ok((tests, json!({ "values": to_value(&values), "c_plus_2d_extrapolated": extrapolated })))
}

fn means_rows(trajs: &[Trajectory]) -> (Vec<String>, Vec<Vec<f64>>) {
    let d = trajs[0].snapshots.first().map_or(1, |s| s.dim());
    let paired = !trajs[0].paired.is_empty();
    let mut header = vec!["replica".to_string(), "checkpoint".to_string(), "t".to_string()];
    header.extend((1..=d).map(|a| format!("mean{a}")));
    if paired {
        header.extend((1..=d).map(|a| format!("tilde_mean{a}")));
    }
    let mut rows = Vec::new();
    for (r, tr) in trajs.iter().enumerate() {
        for (i, t) in tr.times.iter().enumerate() {
            let mut row = vec![r as f64, i as f64, *t];
            row.extend(&tr.means[i]);
            if paired {
                row.extend((0..d).map(|a| tr.paired[i].get(a, 0).re));
            }
            rows.push(row);
        }
    }
    (header, rows)
}

fn write_spectral(path: &Path, times: &[f64], snaps: &[SpectralField]) -> Result<(), CliError> {
    let v: Vec<Value> = times
        .iter()
        .zip(snaps)
        .enumerate()
        .map(|(i, (t, s))| json!({ "checkpoint": i, "t": t, "modes": to_value(&s.spectral_rows()) }))
        .collect();
    write_json(path, &v)
}

pub fn simulate_cmd(cfg: &Config, out: &Path, threads: Option<usize>) -> Result<Outcome, CliError> {
    let sim = cfg.sim_config()?;
    sim.validate()?;
    let sec = cfg.section(&cfg.simulation, "simulation")?;
    let trajs = run_replicas(sim.replicas, sim.seed, threads, |_, mut rng| simulate(&sim, &mut rng, sec.checkpoints))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let first = &trajs[0];
    let (h, rows) = physical_rows(&first.times, &first.snapshots)?;
    write_table(&out.join("snapshots.csv"), &h, &rows)?;
    write_spectral(&out.join("spectral.json"), &first.times, &first.snapshots)?;
    if !first.paired.is_empty() {
        let (h, rows) = physical_rows(&first.times, &first.paired)?;
        write_table(&out.join("snapshots_tilde.csv"), &h, &rows)?;
    }
    if sim.scheme.is_height() {
        let (h, rows) = means_rows(&trajs);
        write_table(&out.join("means.csv"), &h, &rows)?;
    }
    let finals: Vec<SpectralField> = trajs.iter().map(|t| t.snapshots.last().cloned().expect("non-empty")).collect();
    if sec.dump_samples {
        write_dump(&out.join("samples.bin"), &finals)?;
    }
    let mut tests = Vec::new();
    if sim.scheme == Scheme::GalerkinSbe {
        let drift = trajs
            .iter()
            .flat_map(|t| &t.snapshots)
            .flat_map(|s| (0..s.dim()).map(move |a| s.get(a, 0).norm()))
            .fold(0.0_f64, f64::max);
        tests.push(TestOutcome::at_most("zero_mode_conserved", drift, 0.0));
        let hat = hat_transform(&sim.tensor, &sim.diffusion)?;
        if is_trilinear(&hat, hat.scaled_tol(kpz_core::tensor::DEFAULT_REL_TOL)) {
            let worst = finals
                .iter()
                .map(|u| energy_identity_residual(u, &sim.tensor, &sim.diffusion, sim.cutoff_n, sim.psi).1)
                .fold(0.0_f64, f64::max);
            tests.push(TestOutcome::at_most("energy_identity", worst, 1e-10));
        }
    }
    let energy: Vec<f64> = finals.iter().map(|s| s.norm_sq()).collect();
    let (mean, se) = kpz_core::stats::mean_se(&energy);
    Ok((tests, json!({ "steps": sim.steps(), "final_energy_mean": mean, "final_energy_stderr": se })))
}

pub fn invariance(cfg: &Config, out: &Path, threads: Option<usize>) -> Result<Outcome, CliError> {
    let sim = cfg.sim_config()?;
    if sim.scheme != Scheme::GalerkinSbe {
        return Err(CliError::Schema("invariance-test needs simulation.scheme = \"galerkin_sbe\"".into()));
    }
    let gates = cfg.invariance.clone().unwrap_or_default();
    let InvarianceSpec { max_abs_z, max_frac_over_3 } = gates;
    kpz_core::noise::cholesky(sim.diffusion.a())?;
    let samples = final_snapshots(&sim, threads)?;
    if cfg.simulation.as_ref().is_some_and(|s| s.dump_samples) {
        write_dump(&out.join("samples.bin"), &samples)?;
    }
    let z = invariance_z_test(&sim, &samples)?;
    write_csv(&out.join("invariance_z.csv"), &z.entries)?;
    let tests = vec![
        TestOutcome::at_most("max_abs_z", z.max_abs_z, max_abs_z),
        TestOutcome::at_most("frac_abs_z_ge_3", z.frac_over_3, max_frac_over_3),
    ];
    Ok((tests, json!({ "samples": z.samples, "entries": z.entries.len(), "max_abs_z": z.max_abs_z, "frac_over_3": z.frac_over_3 })))
}

#[derive(Serialize)]
struct MomentRow<'a> {
    quantity: &'a str,
    alpha: usize,
    beta: usize,
    estimate: f64,
    stderr: f64,
    closed_form_band: f64,
    z_score: f64,
}

pub fn moments(cfg: &Config, out: &Path, threads: Option<usize>) -> Result<Outcome, CliError> {
    let (dcfg, plan, max_z) = cfg.driver_config()?;
    let batches = run_replicas(cfg.replicas, cfg.seed, threads, |_, mut rng| sample_replica(&dcfg, &plan, &mut rng))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let est = summarize(&dcfg, &plan, &batches)?;
    let rows: Vec<MomentRow> = est
        .entries
        .iter()
        .map(|e| MomentRow {
            quantity: e.quantity.label(),
            alpha: e.alpha + 1,
            beta: e.beta + 1,
            estimate: e.estimate,
            stderr: e.stderr,
            closed_form_band: e.closed_form_band,
            z_score: e.z_score,
        })
        .collect();
    write_csv(&out.join("moments.csv"), &rows)?;
    let tests = est
        .entries
        .iter()
        .map(|e| TestOutcome::at_most(format!("{}[{},{}]", e.quantity.label(), e.alpha + 1, e.beta + 1), e.z_score.abs(), max_z))
        .collect();
    Ok((tests, to_value(&est)))
}

#[derive(Serialize)]
struct DriftRow {
    component: usize,
    slope: f64,
    stderr: f64,
    prediction: f64,
    rel_error: f64,
}

pub fn drift(cfg: &Config, out: &Path, threads: Option<usize>) -> Result<Outcome, CliError> {
    let sim = cfg.sim_config()?;
    let DriftSpec { burn_in, checkpoints, rel_tol } = cfg.drift.clone().unwrap_or_default();
    let est = drift_experiment(&sim, burn_in, checkpoints, threads)?;
    let rel = |a: usize| {
        let p = est.prediction[a];
        let diff = (est.slope[a] - p).abs();
        if p == 0.0 { diff } else { diff / p.abs() }
    };
    let rows: Vec<DriftRow> = (0..sim.dim())
        .map(|a| DriftRow { component: a + 1, slope: est.slope[a], stderr: est.stderr[a], prediction: est.prediction[a], rel_error: rel(a) })
        .collect();
    write_csv(&out.join("drift.csv"), &rows)?;
    let mut header = vec!["replica".to_string()];
    header.extend((1..=sim.dim()).map(|a| format!("slope{a}")));
    let per: Vec<Vec<f64>> = est
        .replica_slopes
        .iter()
        .enumerate()
        .map(|(i, s)| std::iter::once(i as f64).chain(s.iter().copied()).collect())
        .collect();
    write_table(&out.join("drift_replicas.csv"), &header, &per)?;
    let mut tests = Vec::new();
    for a in 0..sim.dim() {
        tests.push(TestOutcome::at_most(format!("drift_rel_error[{}]", a + 1), rel(a), rel_tol));
        if est.prediction[a] != 0.0 {
            let same = est.slope[a].signum() == est.prediction[a].signum();
            tests.push(TestOutcome::expect(format!("drift_sign[{}]", a + 1), same, true));
        }
    }
    Ok((tests, json!({ "slope": est.slope, "stderr": est.stderr, "prediction": est.prediction, "burn_in": est.burn_in })))
}
