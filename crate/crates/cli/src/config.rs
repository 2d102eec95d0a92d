//! Versioned TOML configuration shared by every subcommand.

use kpz_core::drivers::{DriverConfig, DriverScheme, Quadrature, SamplingPlan, DEFAULT_BURN_IN};
use kpz_core::mollifier::{CutoffSymbol, Mollifier, MollifierSymbol};
use kpz_core::{CouplingTensor, DiffusionPair, RenormPolicy, Scheme, SimConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub tensor: TensorSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub mollifier: MollifierSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renorm: Option<RenormSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
}

fn default_replicas() -> usize {
    1
}

/// Coupling tensor, either a named preset or `gamma[α][β][γ]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TensorSpec {
    Explicit { gamma: Vec<Vec<Vec<f64>>> },
    Scalar { value: f64 },
    TrilinearExample,
    ErtasKardar { lambda1: f64, lambda2: f64 },
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec::Scalar { value: 1.0 }
    }
}

impl TensorSpec {
    pub fn build(&self) -> Result<CouplingTensor, CliError> {
        Ok(match self {
            TensorSpec::Explicit { gamma } => CouplingTensor::from_nested(gamma.len(), gamma)?,
            TensorSpec::Scalar { value } => CouplingTensor::scalar(*value),
            TensorSpec::TrilinearExample => CouplingTensor::trilinear_example(),
            TensorSpec::ErtasKardar { lambda1, lambda2 } => CouplingTensor::ertas_kardar(*lambda1, *lambda2),
        })
    }
}

/// `sigma` as rows; identity of the tensor's dimension when absent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    #[serde(default = "default_symbol")]
    pub kind: MollifierSymbol,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_symbol() -> MollifierSymbol {
    MollifierSymbol::Gaussian
}

fn default_eps() -> f64 {
    0.1
}

impl Default for MollifierSpec {
    fn default() -> Self {
        Self { kind: default_symbol(), eps: default_eps() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect_trilinear: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect_no_log: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cole_hopf: Option<ColeHopfSpec>,
}

fn default_rel_tol() -> f64 {
    kpz_core::tensor::DEFAULT_REL_TOL
}

/// Candidate `s = s_re + i·s_im` (rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColeHopfSpec {
    pub s_re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_im: Option<Vec<Vec<f64>>>,
    #[serde(default = "yes")]
    pub expect: bool,
    #[serde(default = "default_rel_tol")]
    pub tol: f64,
}

fn yes() -> bool {
    true
}

impl ColeHopfSpec {
    pub fn matrix(&self) -> Result<DMatrix<Complex64>, CliError> {
        let d = self.s_re.len();
        let im = self.s_im.clone().unwrap_or_else(|| vec![vec![0.0; d]; d]);
        if im.len() != d || self.s_re.iter().chain(&im).any(|r| r.len() != d) {
            return Err(CliError::Schema("cole_hopf.s_re and s_im must be square and of equal size".into()));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| Complex64::new(self.s_re[i][j], im[i][j])))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenormSpec {
    pub eps: Vec<f64>,
    #[serde(default = "default_renorm_tol")]
    pub tol: f64,
    /// Relative part of the tilde cancellation gate.
    #[serde(default = "default_cancel_tol")]
    pub cancellation_rel_tol: f64,
    /// With two or more ε, extrapolate the two smallest to ε = 0.
    #[serde(default = "one_f64")]
    pub richardson_order: f64,
    #[serde(default = "default_limit_tol")]
    pub limit_tol: f64,
}

fn default_renorm_tol() -> f64 {
    1e-12
}

fn default_cancel_tol() -> f64 {
    1e-10
}

fn one_f64() -> f64 {
    1.0
}

fn default_limit_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub scheme: Scheme,
    pub modes_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_n: Option<usize>,
    #[serde(default)]
    pub psi: CutoffSymbol,
    pub dt: f64,
    pub horizon_t: f64,
    #[serde(default)]
    pub renorm_policy: RenormPolicy,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Write the final state of every replica to `samples.bin`.
    #[serde(default)]
    pub dump_samples: bool,
}

fn default_checkpoints() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSpec {
    #[serde(default = "default_max_z")]
    pub max_abs_z: f64,
    #[serde(default = "default_frac")]
    pub max_frac_over_3: f64,
}

fn default_max_z() -> f64 {
    4.0
}

fn default_frac() -> f64 {
    0.01
}

impl Default for InvarianceSpec {
    fn default() -> Self {
        Self { max_abs_z: default_max_z(), max_frac_over_3: default_frac() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSpec {
    pub modes: usize,
    pub dt: f64,
    #[serde(default)]
    pub scheme: DriverScheme,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Sampling time per replica after burn-in.
    pub duration: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_max_z")]
    pub max_abs_z: f64,
}

fn default_burn_in() -> f64 {
    DEFAULT_BURN_IN
}

fn default_batches() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    #[serde(default = "default_drift_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_drift_checkpoints")]
    pub checkpoints: usize,
    #[serde(default = "default_drift_tol")]
    pub rel_tol: f64,
}

fn default_drift_burn_in() -> f64 {
    0.25
}

fn default_drift_checkpoints() -> usize {
    400
}

fn default_drift_tol() -> f64 {
    0.25
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self { burn_in: default_drift_burn_in(), checkpoints: default_drift_checkpoints(), rel_tol: default_drift_tol() }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.replicas == 0 {
            return Err(CliError::Schema("replicas must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn tensor(&self) -> Result<CouplingTensor, CliError> {
        self.tensor.build()
    }

    pub fn diffusion(&self, d: usize) -> Result<DiffusionPair, CliError> {
        match &self.diffusion.sigma {
            Some(rows) => Ok(DiffusionPair::from_rows(rows)?),
            None => Ok(DiffusionPair::identity(d)),
        }
    }

    pub fn mollifier(&self) -> Mollifier {
        Mollifier::new(self.mollifier.kind, self.mollifier.eps)
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| CliError::Schema(format!("missing [{name}] section")))
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let s = self.section(&self.simulation, "simulation")?;
        let tensor = self.tensor()?;
        let diffusion = self.diffusion(tensor.dim())?;
        Ok(SimConfig {
            tensor,
            diffusion,
            mollifier: self.mollifier(),
            cutoff_n: s.cutoff_n.unwrap_or(s.modes_k),
            psi: s.psi,
            modes_k: s.modes_k,
            dt: s.dt,
            horizon_t: s.horizon_t,
            replicas: self.replicas,
            seed: self.seed,
            scheme: s.scheme,
            renorm_policy: s.renorm_policy,
        })
    }

    pub fn driver_config(&self) -> Result<(DriverConfig, SamplingPlan, f64), CliError> {
        let m = self.section(&self.moments, "moments")?;
        let tensor = self.tensor()?;
        let diffusion = self.diffusion(tensor.dim())?;
        let cfg = DriverConfig {
            tensor,
            diffusion,
            mollifier: self.mollifier(),
            modes: m.modes,
            dt: m.dt,
            scheme: m.scheme,
            quadrature: m.quadrature,
        };
        let plan = SamplingPlan { burn_in: m.burn_in, duration: m.duration, batches: m.batches, max_stderr: None };
        Ok((cfg, plan, m.max_abs_z))
    }
}
