//! Time integration of the coupled Burgers and KPZ systems.
//!
//! All schemes are exponential Euler: the heat semigroup and the stochastic
//! convolution are exact per mode, the nonlinearity is frozen over the step
//! with weight `dt·φ₁(−2π²k²dt)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drivers::phi1;
use crate::error::{Error, Result};
use crate::mollifier::{CutoffSymbol, Mollifier};
use crate::noise::{burgers_noise, cholesky, heat_decay, height_noise, sample_noise, sample_stationary_ou, NoiseIncrement, RngStream};
use crate::renorm::{b_matrices_from, band_values, c_eps_band};
use crate::replicas::run_replicas;
use crate::spectral::{PaddedGrid, SpectralField};
use crate::stats::{covariance_z_test, mean_se, ols_slope, ZTest};
use crate::tensor::{f_matrix, hat_transform, trilinear_defect, CouplingTensor, DiffusionPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Galerkin Burgers: `∂ₜu = ½∂ₓ²u + F_N(u) + σ∂ₓξ`.
    GalerkinSbe,
    /// Height `∂ₜh = ½∂ₓ²h + ½Γ(∂ₓh∂ₓh − cA − B) + σφ(εD)ξ`.
    KpzPlain,
    /// As `KpzPlain` with the nonlinearity filtered by `φ²(εD)` and `B̃`.
    KpzTilde,
    /// Both height schemes driven by the same noise.
    KpzPair,
    /// Burgers `∂ₜu = ½∂ₓ²u + ½Γ∂ₓ(uu) + σ∂ₓφ(εD)ξ`.
    BurgersMollified,
    /// Burgers with the nonlinearity filtered: `½Γ∂ₓφ²(εD)(uu)`.
    BurgersFiltered,
}

impl Scheme {
    pub fn is_height(self) -> bool {
        matches!(self, Scheme::KpzPlain | Scheme::KpzTilde | Scheme::KpzPair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RenormPolicy {
    /// `B = B̃ = 0`.
    #[default]
    Zero,
    /// Band-limited `B`, `B̃` from the lattice sums.
    Computed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightVariant {
    Plain,
    Tilde,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tensor: CouplingTensor,
    pub diffusion: DiffusionPair,
    pub mollifier: Mollifier,
    pub cutoff_n: usize,
    pub psi: CutoffSymbol,
    pub modes_k: usize,
    pub dt: f64,
    pub horizon_t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub renorm_policy: RenormPolicy,
}

/// Largest step accepted for `K` modes: `10/(2π²K²)`.
pub fn max_stable_dt(k: usize) -> f64 {
    10.0 / (2.0 * PI * PI * (k * k) as f64)
}

impl SimConfig {
    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn steps(&self) -> usize {
        (self.horizon_t / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.tensor.dim();
        if self.diffusion.dim() != d {
            return Err(Error::Dimension(format!("tensor has d = {d}, sigma has d = {}", self.diffusion.dim())));
        }
        if !crate::tensor::validate_bilinear(&self.tensor) {
            return Err(Error::NotBilinear);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon_t >= self.dt) {
            return Err(Error::InvalidInput(format!("horizon {} shorter than one step {}", self.horizon_t, self.dt)));
        }
        if !(self.mollifier.eps > 0.0 && self.mollifier.eps.is_finite()) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidInput("need at least one replica".into()));
        }
        if self.scheme == Scheme::GalerkinSbe {
            if self.cutoff_n == 0 {
                return Err(Error::InvalidInput("cutoff N must be positive".into()));
            }
            if self.modes_k < self.cutoff_n {
                return Err(Error::InvalidInput(format!("modes K = {} below cutoff N = {}", self.modes_k, self.cutoff_n)));
            }
        }
        if self.modes_k < 4 {
            return Err(Error::Unstable(format!("K = {} is below the minimum of 4 modes", self.modes_k)));
        }
        let limit = max_stable_dt(self.modes_k);
        if self.dt > limit {
            return Err(Error::Unstable(format!("dt = {} exceeds 10/(2π²K²) = {limit:.3e} for K = {}", self.dt, self.modes_k)));
        }
        Ok(())
    }
}

/// `F_N^α(u) = ½Γ^α_{βγ} ∂ₓ P_N(P_N u^β P_N u^γ)`, products on a dealiased grid.
pub fn f_n(u: &SpectralField, t: &CouplingTensor, n: usize, psi: CutoffSymbol) -> SpectralField {
    f_n_on(&mut PaddedGrid::new(u.max_mode()), u, t, n, psi)
}

pub fn f_n_on(grid: &mut PaddedGrid, u: &SpectralField, t: &CouplingTensor, n: usize, psi: CutoffSymbol) -> SpectralField {
    let p = u.project_smooth(n, psi);
    grid.contract(t, &p, &p, 0.5).derivative().project_smooth(n, psi)
}

/// `(A⁻¹)_{αβ}⟨F_N^α(u), u^β⟩` and the same divided by a bound on its size,
/// `‖A⁻¹‖_max · ½max|Γ| · d⁴ · 2πK·√(2K+1) · (max_α ‖u^α‖)³`.
pub fn energy_identity_residual(
    u: &SpectralField,
    t: &CouplingTensor,
    dp: &DiffusionPair,
    n: usize,
    psi: CutoffSymbol,
) -> (f64, f64) {
    let f = f_n(u, t, n, psi);
    let a_inv = dp.tau().transpose() * dp.tau();
    let d = u.dim();
    let mut r = 0.0;
    for a in 0..d {
        for b in 0..d {
            r += a_inv[(a, b)] * f.inner_component(u, a, b);
        }
    }
    let k = u.max_mode() as f64;
    let unorm = (0..d).map(|a| u.inner_component(u, a, a).sqrt()).fold(0.0, f64::max);
    let scale = a_inv.amax() * 0.5 * t.max_abs() * (d as f64).powi(4) * 2.0 * PI * k * (2.0 * k + 1.0).sqrt() * unorm.powi(3);
    let normalised = if scale > 0.0 { r.abs() / scale } else { 0.0 };
    (r, normalised)
}

fn lambda(k: usize) -> f64 {
    2.0 * PI * PI * (k * k) as f64
}

/// Burgers-type stepper `û ← e^{−λdt}û + dt φ₁ N̂(u) + noise` with
/// `N(u) = ½Γ m_out(D) ∂ₓ(m_in(D)u · m_in(D)u)`.
#[derive(Debug, Clone)]
pub struct BurgersStepper {
    tensor: CouplingTensor,
    sigma: DMatrix<f64>,
    noise_symbol: Option<Mollifier>,
    inner: Vec<f64>,
    outer: Vec<f64>,
    decay: Vec<f64>,
    w1: Vec<f64>,
    grid: PaddedGrid,
}

impl BurgersStepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let k = cfg.modes_k;
        let (inner, outer, noise_symbol) = match cfg.scheme {
            Scheme::GalerkinSbe => {
                let p = cfg.psi.table(cfg.cutoff_n, k);
                (p.clone(), p, None)
            }
            Scheme::BurgersMollified => (vec![1.0; k + 1], vec![1.0; k + 1], Some(cfg.mollifier)),
            Scheme::BurgersFiltered => {
                let f = (0..=k).map(|j| cfg.mollifier.at(j as i64).powi(2)).collect();
                (vec![1.0; k + 1], f, Some(cfg.mollifier))
            }
            s => return Err(Error::InvalidInput(format!("{s:?} is not a Burgers scheme"))),
        };
        Ok(Self::from_parts(cfg, inner, outer, noise_symbol))
    }

    fn from_parts(cfg: &SimConfig, inner: Vec<f64>, outer: Vec<f64>, noise_symbol: Option<Mollifier>) -> Self {
        let (k, dt) = (cfg.modes_k, cfg.dt);
        Self {
            tensor: cfg.tensor.clone(),
            sigma: cfg.diffusion.sigma().clone(),
            noise_symbol,
            inner,
            outer,
            decay: (0..=k).map(|j| heat_decay(j, dt)).collect(),
            w1: (0..=k).map(|j| dt * phi1(-lambda(j) * dt)).collect(),
            grid: PaddedGrid::new(k),
        }
    }

    pub fn nonlinearity(&mut self, u: &SpectralField) -> SpectralField {
        let inner = &self.inner;
        let v = u.multiply(|k| inner[k]);
        let mut out = self.grid.contract(&self.tensor, &v, &v, 0.5).derivative();
        let outer = &self.outer;
        out.multiply_in_place(|k| outer[k]);
        out
    }

    pub fn step_with(&mut self, u: &SpectralField, noise: &NoiseIncrement) -> SpectralField {
        let n = if self.tensor.is_zero() { None } else { Some(self.nonlinearity(u)) };
        let mut out = u.multiply(|k| self.decay[k]);
        if let Some(n) = n {
            for a in 0..u.dim() {
                for (j, (z, f)) in out.component_mut(a).iter_mut().zip(n.component(a)).enumerate() {
                    *z += f * self.w1[j];
                }
            }
        }
        out.axpy(1.0, &burgers_noise(noise, &self.sigma, self.noise_symbol.as_ref()));
        out
    }

    pub fn step(&mut self, u: &SpectralField, rng: &mut RngStream) -> SpectralField {
        let noise = sample_noise(rng, u.max_mode(), u.dim(), self.dt());
        self.step_with(u, &noise)
    }

    fn dt(&self) -> f64 {
        // φ₁(0) = 1
        self.w1[0]
    }
}

/// Height stepper for both mollified KPZ variants. The zero mode is
/// integrated too: it carries the counterterm and the drift.
#[derive(Debug, Clone)]
pub struct HeightStepper {
    tensor: CouplingTensor,
    sigma: DMatrix<f64>,
    mollifier: Mollifier,
    filter: Vec<f64>,
    /// `½Γ^α_{βγ}(c A^{βγ} + B^{βγ})`, subtracted from the zero mode.
    shift: Vec<f64>,
    decay: Vec<f64>,
    w1: Vec<f64>,
    grid: PaddedGrid,
}

impl HeightStepper {
    pub fn new(cfg: &SimConfig, variant: HeightVariant) -> Result<Self> {
        let (k, dt, d) = (cfg.modes_k, cfg.dt, cfg.dim());
        let m = cfg.mollifier;
        let filter = match variant {
            HeightVariant::Plain => vec![1.0; k + 1],
            HeightVariant::Tilde => (0..=k).map(|j| m.at(j as i64).powi(2)).collect(),
        };
        let c = c_eps_band(&m.kind, m.eps, k);
        let mut counter = cfg.diffusion.a() * c;
        if cfg.renorm_policy == RenormPolicy::Computed {
            let (b, bt) = b_matrices_from(&cfg.tensor, &cfg.diffusion, &band_values(&m.kind, m.eps, k))?;
            counter += match variant {
                HeightVariant::Plain => b,
                HeightVariant::Tilde => bt,
            };
        }
        let shift = (0..d).map(|a| 0.5 * cfg.tensor.contract_lower(&counter)[a]).collect();
        Ok(Self {
            tensor: cfg.tensor.clone(),
            sigma: cfg.diffusion.sigma().clone(),
            mollifier: m,
            filter,
            shift,
            decay: (0..=k).map(|j| heat_decay(j, dt)).collect(),
            w1: (0..=k).map(|j| dt * phi1(-lambda(j) * dt)).collect(),
            grid: PaddedGrid::new(k),
        })
    }

    /// `½Γ(∂h∂h)` filtered, minus the counterterm in the zero mode.
    pub fn nonlinearity(&mut self, h: &SpectralField) -> SpectralField {
        let dh = h.derivative();
        let mut out = self.grid.contract(&self.tensor, &dh, &dh, 0.5);
        let filter = &self.filter;
        out.multiply_in_place(|k| filter[k]);
        for (a, s) in self.shift.iter().enumerate() {
            let z = out.get(a, 0);
            out.set(a, 0, Complex64::new(z.re - s, 0.0));
        }
        out
    }

    pub fn step_with(&mut self, h: &SpectralField, noise: &NoiseIncrement) -> SpectralField {
        let n = self.nonlinearity(h);
        let mut out = h.multiply(|k| self.decay[k]);
        for a in 0..h.dim() {
            for (j, (z, f)) in out.component_mut(a).iter_mut().zip(n.component(a)).enumerate() {
                *z += f * self.w1[j];
            }
        }
        out.axpy(1.0, &height_noise(noise, &self.sigma, Some(&self.mollifier)));
        out
    }
}

/// `h` with `∂ₓh = u` and zero spatial mean.
pub fn integrate_derivative(u: &SpectralField) -> SpectralField {
    SpectralField::from_fn(u.dim(), u.max_mode(), |a, k| {
        if k == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            u.get(a, k) / Complex64::new(0.0, 2.0 * PI * k as f64)
        }
    })
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One snapshot per checkpoint; for `KpzPair` the plain variant.
    pub snapshots: Vec<SpectralField>,
    /// Tilde-variant snapshots of a `KpzPair` run.
    pub paired: Vec<SpectralField>,
    /// Spatial mean per checkpoint (height schemes; zero otherwise).
    pub means: Vec<Vec<f64>>,
}

fn means_of(f: &SpectralField) -> Vec<f64> {
    (0..f.dim()).map(|a| f.get(a, 0).re).collect()
}

/// Initial condition: `μ_A` (unmollified) for the Galerkin scheme, the
/// mollified stationary OU law otherwise; height schemes integrate it.
pub fn initial_state(cfg: &SimConfig, rng: &mut RngStream) -> Result<SpectralField> {
    let m = (cfg.scheme != Scheme::GalerkinSbe).then_some(&cfg.mollifier);
    let u = sample_stationary_ou(rng, &cfg.diffusion, cfg.modes_k, m)?;
    Ok(if cfg.scheme.is_height() { integrate_derivative(&u) } else { u })
}

/// One replica from `initial`, recording `checkpoints` evenly spaced
/// snapshots (the final time always included).
pub fn simulate_from(cfg: &SimConfig, initial: SpectralField, rng: &mut RngStream, checkpoints: usize) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    let every = (steps / checkpoints.max(1)).max(1);
    let mut traj = Trajectory { times: Vec::new(), snapshots: Vec::new(), paired: Vec::new(), means: Vec::new() };
    let (d, k) = (cfg.dim(), cfg.modes_k);
    let record = |traj: &mut Trajectory, i: usize, a: &SpectralField, b: Option<&SpectralField>| {
        traj.times.push(i as f64 * cfg.dt);
        traj.means.push(means_of(a));
        traj.snapshots.push(a.clone());
        if let Some(b) = b {
            traj.paired.push(b.clone());
        }
    };
    match cfg.scheme {
        Scheme::GalerkinSbe | Scheme::BurgersMollified | Scheme::BurgersFiltered => {
            let mut st = BurgersStepper::new(cfg)?;
            let mut u = initial;
            let zero_mean = cfg.scheme == Scheme::GalerkinSbe && u.is_zero_mean();
            for i in 1..=steps {
                let noise = sample_noise(rng, k, d, cfg.dt);
                u = st.step_with(&u, &noise);
                if zero_mean {
                    assert!(u.is_zero_mean(), "Galerkin dynamics left the zero-mean space");
                }
                if i % every == 0 || i == steps {
                    record(&mut traj, i, &u, None);
                }
            }
        }
        Scheme::KpzPlain | Scheme::KpzTilde => {
            let v = if cfg.scheme == Scheme::KpzPlain { HeightVariant::Plain } else { HeightVariant::Tilde };
            let mut st = HeightStepper::new(cfg, v)?;
            let mut h = initial;
            for i in 1..=steps {
                let noise = sample_noise(rng, k, d, cfg.dt);
                h = st.step_with(&h, &noise);
                if i % every == 0 || i == steps {
                    record(&mut traj, i, &h, None);
                }
            }
        }
        Scheme::KpzPair => {
            let mut plain = HeightStepper::new(cfg, HeightVariant::Plain)?;
            let mut tilde = HeightStepper::new(cfg, HeightVariant::Tilde)?;
            let (mut h, mut ht) = (initial.clone(), initial);
            for i in 1..=steps {
                let noise = sample_noise(rng, k, d, cfg.dt);
                h = plain.step_with(&h, &noise);
                ht = tilde.step_with(&ht, &noise);
                if i % every == 0 || i == steps {
                    record(&mut traj, i, &h, Some(&ht));
                }
            }
        }
    }
    Ok(traj)
}

pub fn simulate(cfg: &SimConfig, rng: &mut RngStream, checkpoints: usize) -> Result<Trajectory> {
    let init = initial_state(cfg, rng)?;
    simulate_from(cfg, init, rng, checkpoints)
}

/// Final state of every replica, in replica order.
pub fn final_snapshots(cfg: &SimConfig, threads: Option<usize>) -> Result<Vec<SpectralField>> {
    cfg.validate()?;
    let finals = run_replicas(cfg.replicas, cfg.seed, threads, |_, mut rng| {
        simulate(cfg, &mut rng, 1).map(|t| t.snapshots.last().cloned().expect("at least one step"))
    });
    finals.into_iter().collect()
}

/// Mode covariances of `samples` z-tested against `A` on every mode.
pub fn invariance_z_test(cfg: &SimConfig, samples: &[SpectralField]) -> Result<ZTest> {
    let targets = vec![cfg.diffusion.a().clone(); cfg.modes_k + 1];
    covariance_z_test(samples, &targets)
}

/// Replicas started from `μ_A`, run to the horizon, final mode covariances
/// z-tested against `A`.
pub fn invariance_experiment(cfg: &SimConfig, threads: Option<usize>) -> Result<ZTest> {
    if cfg.scheme != Scheme::GalerkinSbe {
        return Err(Error::InvalidInput("the invariance test runs the Galerkin scheme".into()));
    }
    cholesky(cfg.diffusion.a())?;
    invariance_z_test(cfg, &final_snapshots(cfg, threads)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftEstimate {
    /// Mean over replicas of the per-replica regression slopes.
    pub slope: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `−½ Γ^α_{βγ} F^{βγ} (C + 2D)` with band-limited sums.
    pub prediction: Vec<f64>,
    pub replica_slopes: Vec<Vec<f64>>,
    pub burn_in: f64,
}

/// Fixed-`ε` drift predicted for `mean(h̃ − h)`.
pub fn drift_prediction(cfg: &SimConfig) -> Result<Vec<f64>> {
    let m = cfg.mollifier;
    let v = band_values(&m.kind, m.eps, cfg.modes_k);
    let f = f_matrix(&cfg.tensor, &cfg.diffusion)?;
    Ok(cfg.tensor.contract_lower(&f).iter().map(|x| -0.5 * x * v.c_plus_2d()).collect())
}

/// Runs coupled plain/tilde height pairs and regresses the spatial mean of
/// `h̃ − h` on time after `burn_in`.
pub fn drift_experiment(cfg: &SimConfig, burn_in: f64, checkpoints: usize, threads: Option<usize>) -> Result<DriftEstimate> {
    let mut cfg = cfg.clone();
    cfg.scheme = Scheme::KpzPair;
    cfg.validate()?;
    let hat = hat_transform(&cfg.tensor, &cfg.diffusion)?;
    let defect = trilinear_defect(&hat);
    if defect > hat.scaled_tol(crate::tensor::DEFAULT_REL_TOL) {
        return Err(Error::NotTrilinear { defect });
    }
    if burn_in >= cfg.horizon_t {
        return Err(Error::InvalidInput("burn-in must be shorter than the horizon".into()));
    }
    let d = cfg.dim();
    let runs = run_replicas(cfg.replicas, cfg.seed, threads, |_, mut rng| -> Result<Vec<f64>> {
        let t = simulate(&cfg, &mut rng, checkpoints)?;
        Ok((0..d)
            .map(|a| {
                let (ts, ys): (Vec<f64>, Vec<f64>) = t
                    .times
                    .iter()
                    .zip(t.snapshots.iter().zip(&t.paired))
                    .filter(|(time, _)| **time >= burn_in)
                    .map(|(time, (h, ht))| (*time, ht.get(a, 0).re - h.get(a, 0).re))
                    .unzip();
                ols_slope(&ts, &ys).0
            })
            .collect())
    });
    let replica_slopes = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let (slope, stderr) = (0..d)
        .map(|a| mean_se(&replica_slopes.iter().map(|s| s[a]).collect::<Vec<_>>()))
        .unzip();
    Ok(DriftEstimate { slope, stderr, prediction: drift_prediction(&cfg)?, replica_slopes, burn_in })
}
