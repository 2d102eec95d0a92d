//! One pass/fail line per acceptance criterion.
//!
//! `fast_gate` runs every criterion except the drift experiment in one
//! thread so the runtime budgets are measured without contention; the drift
//! experiment is `#[ignore]`d and runs with `cargo test -- --ignored`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use kpz_core::mollifier::MollifierSymbol;
use kpz_core::noise::sample_mu_a;
use kpz_core::renorm::{c_big, d_big, renorm_values, richardson};
use kpz_core::sbe::energy_identity_residual;
use kpz_core::tensor::{c_shift, c_shift_from_f, f_matrix, g_matrix, hat_transform, sample, verify_cole_hopf};
use kpz_core::{CouplingTensor, CutoffSymbol, DiffusionPair, RngStream};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::Value;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    /// Prints the line and records a failure. `budget` is the runtime limit
    /// in seconds when the criterion has one.
    fn check(&mut self, id: &str, what: &str, ok: bool, detail: String, start: Instant, budget: Option<f64>) {
        let secs = start.elapsed().as_secs_f64();
        let in_time = budget.is_none_or(|b| secs < b);
        let pass = ok && in_time;
        let limit = budget.map_or(String::new(), |b| format!(" (limit {b} s)"));
        println!("[{}] {id} {what}: {detail}; runtime {secs:.2} s{limit}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(id.to_string());
        }
    }
}

fn rel_inf(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn ac1(g: &mut Gate) {
    let t0 = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for eps in [0.1, 0.05] {
        let v = renorm_values(&MollifierSymbol::Gaussian, eps, 1e-12).unwrap();
        let stat = v.c_tilde_plus_2d_tilde().abs();
        let bound = 1e-10 * v.c_tilde.abs() + v.est_truncation_error;
        ok &= stat <= bound;
        detail.push(format!("eps={eps}: |C~+2D~| = {stat:.3e} <= {bound:.3e}"));
    }
    g.check("AC1", "tilde cancellation", ok, detail.join(", "), t0, Some(10.0));
}

fn ac2(g: &mut Gate) {
    let t0 = Instant::now();
    let sym = MollifierSymbol::Gaussian;
    let v: Vec<(f64, f64)> = [0.08, 0.04, 0.02]
        .iter()
        .map(|&e| (e, c_big(&sym, e, 1e-12).unwrap() + 2.0 * d_big(&sym, e, 1e-12).unwrap()))
        .collect();
    let coarse = richardson(v[0], v[1], 1.0);
    let fine = richardson(v[1], v[2], 1.0);
    let err = (fine + 1.0 / 12.0).abs();
    let detail = format!(
        "C+2D = {:.6} / {:.6} / {:.6}; extrapolated {fine:.6} (coarse pair {coarse:.6}), |. + 1/12| = {err:.2e} <= 1e-3",
        v[0].1, v[1].1, v[2].1
    );
    g.check("AC2", "C+2D -> -1/12", err <= 1e-3, detail, t0, Some(120.0));
}

fn ac3(g: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = RngStream::new(2024, 3);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let dp = sample::diffusion(rng.rng(), 2 + i % 3);
        let t = sample::trilinear(rng.rng(), &dp);
        let f = f_matrix(&t, &dp).unwrap();
        worst = worst.max(rel_inf(&f, &g_matrix(&t, &dp).unwrap()) / (1.0 + f.amax()));
    }
    let mut differ = 0;
    for i in 0..100 {
        let dp = sample::diffusion(rng.rng(), 2 + i % 3);
        let t = sample::bilinear(rng.rng(), dp.dim());
        let f = f_matrix(&t, &dp).unwrap();
        if rel_inf(&f, &g_matrix(&t, &dp).unwrap()) > 1e-12 * (1.0 + f.amax()) {
            differ += 1;
        }
    }
    let detail = format!("trilinear max |F-G|/(1+|F|) = {worst:.2e} <= 1e-12; generic F != G in {differ}/100 (need >= 99)");
    g.check("AC3", "F = G iff trilinear", worst <= 1e-12 && differ >= 99, detail, t0, Some(5.0));
}

fn ac4(g: &mut Gate) {
    let t0 = Instant::now();
    let c = c_shift(&CouplingTensor::scalar(1.0), &DiffusionPair::identity(1), 1e-12).unwrap()[0];
    let scalar_err = (c - 1.0 / 24.0).abs();
    let mut rng = RngStream::new(2024, 4);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let dp = sample::diffusion(rng.rng(), 1 + i % 4);
        let t = sample::trilinear(rng.rng(), &dp);
        let tol = hat_transform(&t, &dp).unwrap().scaled_tol(1e-10);
        let a = c_shift(&t, &dp, tol).unwrap();
        let b = c_shift_from_f(&t, &dp).unwrap();
        worst = worst.max((&a - &b).amax() / b.amax().max(1.0));
    }
    let detail = format!("scalar |c - 1/24| = {scalar_err:.1e} <= 1e-15; forms differ by {worst:.2e} <= 1e-12");
    g.check("AC4", "drift constant", scalar_err <= 1e-15 && worst <= 1e-12, detail, t0, Some(5.0));
}

fn ac5(g: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = RngStream::new(2024, 5);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let dp = sample::diffusion(rng.rng(), 2);
        let t = sample::trilinear(rng.rng(), &dp);
        let u = sample_mu_a(&mut rng, &dp, 48).unwrap();
        worst = worst.max(energy_identity_residual(&u, &t, &dp, 32, CutoffSymbol::Smooth).1);
    }
    g.check("AC5", "energy identity", worst <= 1e-10, format!("max normalised residual {worst:.2e} <= 1e-10"), t0, Some(30.0));
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Runs the binary; returns the exit code and the parsed report.
fn ckpz(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let status = Command::new(env!("CARGO_BIN_EXE_ckpz"))
        .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .expect("binary runs");
    let report = std::fs::read(out.join("report.json")).map_or(Value::Null, |b| serde_json::from_slice(&b).unwrap());
    (status.status.code().unwrap_or(-1), report)
}

fn stat(report: &Value, name: &str) -> f64 {
    report["tests"].as_array().unwrap().iter().find(|t| t["name"] == name).unwrap()["statistic"].as_f64().unwrap()
}

fn ac6(g: &mut Gate, dir: &Path) {
    let t0 = Instant::now();
    let (code, r) = ckpz("invariance-test", &config("invariance.toml"), &dir.join("ac6"), &[]);
    let detail = format!(
        "{} samples, max |z| = {:.3} <= 4, frac |z| >= 3 = {:.4} <= 0.01, exit {code}",
        r["result"]["samples"],
        stat(&r, "max_abs_z"),
        stat(&r, "frac_abs_z_ge_3")
    );
    g.check("AC6", "mu_A invariance", code == 0, detail, t0, None);
}

fn ac7(g: &mut Gate, dir: &Path) {
    let t0 = Instant::now();
    let (code, r) = ckpz("moments", &config("moments.toml"), &dir.join("ac7"), &[]);
    let detail = r["result"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            format!(
                "{} = {:.5} +- {:.5} vs {:.5} (z = {:.2})",
                e["quantity"].as_str().unwrap(),
                e["estimate"].as_f64().unwrap(),
                e["stderr"].as_f64().unwrap(),
                e["closed_form_band"].as_f64().unwrap(),
                e["z_score"].as_f64().unwrap()
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    g.check("AC7", "driver moments within 4 SE", code == 0, detail, t0, None);
}

fn ac9(g: &mut Gate) {
    let t0 = Instant::now();
    let r = 2.0_f64.sqrt();
    let s = DMatrix::from_row_slice(2, 2, &[1.0, r, 1.0, -r]).map(|x| Complex64::new(x, 0.0));
    let ek = verify_cole_hopf(&CouplingTensor::ertas_kardar(1.0, 2.0), &s, 1e-12).unwrap();
    let id = DMatrix::<Complex64>::identity(2, 2);
    let tri = verify_cole_hopf(&CouplingTensor::trilinear_example(), &id, 1e-12).unwrap();
    let detail = format!("Ertas-Kardar with its s: {ek} (want true); trilinear example with s = I: {tri} (want false)");
    g.check("AC9", "Cole-Hopf verification", ek && !tri, detail, t0, Some(1.0));
}

const SMALL_INVARIANCE: &str = "schema_version = 1\nseed = 9\nreplicas = 40\n[tensor]\nkind = \"trilinear_example\"\n\
    [simulation]\nscheme = \"galerkin_sbe\"\nmodes_k = 16\ncutoff_n = 12\ndt = 1e-4\nhorizon_t = 0.02\n";
const SMALL_MOMENTS: &str = "schema_version = 1\nseed = 9\nreplicas = 4\n[mollifier]\neps = 0.25\n\
    [moments]\nmodes = 16\ndt = 4e-4\nduration = 0.5\nburn_in = 0.05\nbatches = 4\n";
const SMALL_DRIFT: &str = "schema_version = 1\nseed = 9\nreplicas = 4\n[simulation]\nscheme = \"kpz_pair\"\n\
    modes_k = 16\ndt = 1e-4\nhorizon_t = 0.05\n[drift]\nburn_in = 0.01\ncheckpoints = 20\n";

fn ac10(g: &mut Gate, dir: &Path) {
    let t0 = Instant::now();
    let mut same = Vec::new();
    for (cmd, text) in [("invariance-test", SMALL_INVARIANCE), ("moments", SMALL_MOMENTS), ("drift", SMALL_DRIFT)] {
        let cfg = dir.join(format!("{cmd}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let runs: Vec<Vec<u8>> = [("a", "1"), ("b", "1"), ("c", "4")]
            .iter()
            .map(|(tag, threads)| {
                let out = dir.join(format!("ac10-{cmd}-{tag}"));
                let (code, _) = ckpz(cmd, &cfg, &out, &["--threads", threads]);
                assert!(code == 0 || code == 1, "{cmd} exited with {code}");
                std::fs::read(out.join("report.json")).unwrap()
            })
            .collect();
        same.push((cmd, runs[0] == runs[1], runs[0] == runs[2]));
    }
    let ok = same.iter().all(|(_, a, b)| *a && *b);
    let detail = same
        .iter()
        .map(|(c, a, b)| format!("{c}: rerun identical {a}, 1 vs 4 threads identical {b}"))
        .collect::<Vec<_>>()
        .join(", ");
    g.check("AC10", "bit-identical report.json", ok, detail, t0, None);
}

#[test]
fn fast_gate() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = Gate::new();
    ac1(&mut g);
    ac2(&mut g);
    ac3(&mut g);
    ac4(&mut g);
    ac5(&mut g);
    ac6(&mut g, dir.path());
    ac7(&mut g, dir.path());
    println!("[SKIP] AC8 drift experiment: extended, run `cargo test -p kpz-cli --test acceptance -- --ignored`");
    ac9(&mut g);
    ac10(&mut g, dir.path());
    assert!(g.failures.is_empty(), "failed criteria: {:?}", g.failures);
}

#[test]
#[ignore = "extended: about a minute of simulation in release mode"]
fn ac8_drift() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = Gate::new();
    let t0 = Instant::now();
    let (code, r) = ckpz("drift", &config("drift.toml"), &dir.path().join("ac8"), &[]);
    let res = &r["result"];
    let detail = format!(
        "slope {:.5} +- {:.5} vs prediction {:.5}, relative error {:.3} <= 0.25, same sign, exit {code}",
        res["slope"][0].as_f64().unwrap(),
        res["stderr"][0].as_f64().unwrap(),
        res["prediction"][0].as_f64().unwrap(),
        stat(&r, "drift_rel_error[1]")
    );
    g.check("AC8", "drift of the tilde scheme", code == 0, detail, t0, None);
    assert!(g.failures.is_empty());
}
