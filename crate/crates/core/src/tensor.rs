//! Coupling tensor algebra.
//!
//! A [`CouplingTensor`] stores `Γ^α_{βγ}` with the upper index first:
//! `get(a, b, c)` is `Γ^a_{bc}`. Matrices follow the same convention, so
//! `sigma[(a, b)]` is `σ^a_b` and `A = σσᵀ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used for exact algebraic identities.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// The `d×d×d` array of coupling constants `Γ^α_{βγ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    d: usize,
    data: Vec<f64>,
}

impl CouplingTensor {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("tensor dimension must be positive".into()));
        }
        if data.len() != d * d * d {
            return Err(Error::Dimension(format!(
                "expected {} entries for d = {d}, got {}",
                d * d * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tensor entries must be finite".into()));
        }
        Ok(Self { d, data })
    }

    /// Builds a tensor from `gamma[α][β][γ]`, checking that every level has
    /// the declared length.
    pub fn from_nested(d: usize, gamma: &[Vec<Vec<f64>>]) -> Result<Self> {
        if gamma.len() != d {
            return Err(Error::Dimension(format!(
                "declared d = {d} but tensor has {} upper-index slices",
                gamma.len()
            )));
        }
        let mut data = Vec::with_capacity(d * d * d);
        for (a, slice) in gamma.iter().enumerate() {
            if slice.len() != d {
                return Err(Error::Dimension(format!("Γ^{a} has {} rows, expected {d}", slice.len())));
            }
            for (b, row) in slice.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::Dimension(format!(
                        "Γ^{a} row {b} has {} entries, expected {d}",
                        row.len()
                    )));
                }
                data.extend_from_slice(row);
            }
        }
        Self::new(d, data)
    }

    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![0.0; d * d * d] }
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(d * d * d);
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    data.push(f(a, b, c));
                }
            }
        }
        Self { d, data }
    }

    /// The scalar equation `Γ = 1`.
    pub fn scalar(value: f64) -> Self {
        Self { d: 1, data: vec![value] }
    }

    /// `Γ¹ = [[2,1],[1,1]]`, `Γ² = [[1,1],[1,2]]`: trilinear for `σ = I`
    /// but not of Cole–Hopf type.
    pub fn trilinear_example() -> Self {
        Self {
            d: 2,
            data: vec![2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0],
        }
    }

    /// Ertaş–Kardar coupling: `Γ¹₁₁ = λ₁`, `Γ¹₂₂ = λ₂`, `Γ²₁₂ = Γ²₂₁ = λ₁`.
    pub fn ertas_kardar(lambda1: f64, lambda2: f64) -> Self {
        Self {
            d: 2,
            data: vec![lambda1, 0.0, 0.0, lambda2, 0.0, lambda1, lambda1, 0.0],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.d + b) * self.d + c]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let d = self.d;
        self.data[(a * d + b) * d + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.d)
            .map(|a| (0..self.d).map(|b| (0..self.d).map(|c| self.get(a, b, c)).collect()).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// `tol · max(1, max|Γ|)`.
    pub fn scaled_tol(&self, rel: f64) -> f64 {
        rel * self.max_abs().max(1.0)
    }

    /// `Γ^α_{βγ} ↦ Γ^α_{γβ}`.
    pub fn swap_lower(&self) -> Self {
        Self::from_fn(self.d, |a, b, c| self.get(a, c, b))
    }

    /// `Γ^a_{bc} ↦ Γ^a_{bc}·s` for every entry.
    pub fn scaled(&self, s: f64) -> Self {
        Self { d: self.d, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Contraction `Σ_{βγ} Γ^α_{βγ} M^{βγ}` for each α.
    pub fn contract_lower(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let d = self.d;
        DVector::from_fn(d, |a, _| {
            let mut s = 0.0;
            for b in 0..d {
                for c in 0..d {
                    s += self.get(a, b, c) * m[(b, c)];
                }
            }
            s
        })
    }

    fn check_dim(&self, m: &DMatrix<f64>, what: &str) -> Result<()> {
        if m.nrows() != self.d || m.ncols() != self.d {
            return Err(Error::Dimension(format!(
                "{what} is {}x{} but tensor has d = {}",
                m.nrows(),
                m.ncols(),
                self.d
            )));
        }
        Ok(())
    }
}

/// An invertible noise amplitude `σ`, its inverse `τ` and `A = σσᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPair {
    sigma: DMatrix<f64>,
    tau: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl DiffusionPair {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "sigma must be square and non-empty, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sigma entries must be finite".into()));
        }
        let tau = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("sigma is not invertible".into()))?;
        let d = sigma.nrows();
        let norm = sigma.amax().max(f64::MIN_POSITIVE);
        let defect = (&sigma * &tau - DMatrix::<f64>::identity(d, d)).amax();
        if !defect.is_finite() || defect > 1e-10 * norm.max(1.0) * tau.amax().max(1.0) {
            return Err(Error::Singular(format!("sigma is ill-conditioned (σ·τ − I = {defect:.3e})")));
        }
        let a = &sigma * sigma.transpose();
        Ok(Self { sigma, tau, a })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("sigma must be a square nested array".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        let i = DMatrix::identity(d, d);
        Self { sigma: i.clone(), tau: i.clone(), a: i }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn tau(&self) -> &DMatrix<f64> {
        &self.tau
    }

    /// `A^{βγ} = Σ_δ σ^β_δ σ^γ_δ`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The pair with the roles of `σ` and `τ` exchanged.
    pub fn inverse(&self) -> Self {
        Self {
            sigma: self.tau.clone(),
            tau: self.sigma.clone(),
            a: &self.tau * self.tau.transpose(),
        }
    }
}

/// Exact check of `Γ^α_{βγ} = Γ^α_{γβ}`.
pub fn validate_bilinear(t: &CouplingTensor) -> bool {
    let d = t.dim();
    (0..d).all(|a| (0..d).all(|b| (b + 1..d).all(|c| t.get(a, b, c) == t.get(a, c, b))))
}

/// Change of basis `Γ̂^α_{βγ} = τ^α_{α'} Γ^{α'}_{β'γ'} σ^{β'}_β σ^{γ'}_γ`.
pub fn hat_transform(t: &CouplingTensor, dp: &DiffusionPair) -> Result<CouplingTensor> {
    t.check_dim(dp.sigma(), "sigma")?;
    if !validate_bilinear(t) {
        return Err(Error::NotBilinear);
    }
    Ok(change_basis(t, dp.tau(), dp.sigma()))
}

/// `out^α_{βγ} = L^α_{a} Γ^a_{bc} R^b_β R^c_γ`, contracted one index at a time.
fn change_basis(t: &CouplingTensor, left: &DMatrix<f64>, right: &DMatrix<f64>) -> CouplingTensor {
    let d = t.dim();
    // first lower index
    let mut s1 = CouplingTensor::zeros(d);
    for a in 0..d {
        for beta in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for b in 0..d {
                    acc += t.get(a, b, c) * right[(b, beta)];
                }
                s1.set(a, beta, c, acc);
            }
        }
    }
    let mut s2 = CouplingTensor::zeros(d);
    for a in 0..d {
        for beta in 0..d {
            for gamma in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += s1.get(a, beta, c) * right[(c, gamma)];
                }
                s2.set(a, beta, gamma, acc);
            }
        }
    }
    let mut out = CouplingTensor::zeros(d);
    for alpha in 0..d {
        for beta in 0..d {
            for gamma in 0..d {
                let mut acc = 0.0;
                for a in 0..d {
                    acc += left[(alpha, a)] * s2.get(a, beta, gamma);
                }
                out.set(alpha, beta, gamma, acc);
            }
        }
    }
    if validate_bilinear(t) {
        // the staged contraction rounds (β,γ) and (γ,β) differently
        for alpha in 0..d {
            for beta in 0..d {
                for gamma in beta + 1..d {
                    let m = 0.5 * (out.get(alpha, beta, gamma) + out.get(alpha, gamma, beta));
                    out.set(alpha, beta, gamma, m);
                    out.set(alpha, gamma, beta, m);
                }
            }
        }
    }
    out
}

/// Largest violation of full index symmetry `Γ̂^α_{βγ} = Γ̂^α_{γβ} = Γ̂^β_{γα}`.
pub fn trilinear_defect(t_hat: &CouplingTensor) -> f64 {
    let d = t_hat.dim();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let v = t_hat.get(a, b, c);
                worst = worst.max((v - t_hat.get(b, c, a)).abs()).max((v - t_hat.get(a, c, b)).abs());
            }
        }
    }
    worst
}

pub fn is_trilinear(t_hat: &CouplingTensor, tol: f64) -> bool {
    trilinear_defect(t_hat) <= tol
}

/// `E^α_{β₁β₂} = Γ^α_{γ₁γ₂} σ^{γ₁}_{β₁} σ^{γ₂}_{β₂}`.
fn e_tensor(t: &CouplingTensor, sigma: &DMatrix<f64>) -> CouplingTensor {
    change_basis(t, &DMatrix::identity(t.dim(), t.dim()), sigma)
}

/// `F^{βγ} = Σ_{γ₁γ₂} E^β_{γ₁γ₂} E^γ_{γ₁γ₂}`.
pub fn f_matrix(t: &CouplingTensor, dp: &DiffusionPair) -> Result<DMatrix<f64>> {
    t.check_dim(dp.sigma(), "sigma")?;
    let d = t.dim();
    let e = e_tensor(t, dp.sigma());
    Ok(DMatrix::from_fn(d, d, |b, c| {
        let mut s = 0.0;
        for g1 in 0..d {
            for g2 in 0..d {
                s += e.get(b, g1, g2) * e.get(c, g1, g2);
            }
        }
        s
    }))
}

/// `G^{βγ} = Σ_{β₁β₂} Γ^β_{γ₁γ₂} E^{γ₁}_{β₁β₂} σ^{γ₂}_{β₂} σ^γ_{β₁}`.
pub fn g_matrix(t: &CouplingTensor, dp: &DiffusionPair) -> Result<DMatrix<f64>> {
    t.check_dim(dp.sigma(), "sigma")?;
    let d = t.dim();
    let sigma = dp.sigma();
    let e = e_tensor(t, sigma);
    // W^{γ₁ γ₂}_{β₁} = Σ_{β₂} E^{γ₁}_{β₁β₂} σ^{γ₂}_{β₂}
    let mut w = vec![0.0; d * d * d];
    for g1 in 0..d {
        for g2 in 0..d {
            for b1 in 0..d {
                let mut s = 0.0;
                for b2 in 0..d {
                    s += e.get(g1, b1, b2) * sigma[(g2, b2)];
                }
                w[(g1 * d + g2) * d + b1] = s;
            }
        }
    }
    Ok(DMatrix::from_fn(d, d, |beta, gamma| {
        let mut s = 0.0;
        for g1 in 0..d {
            for g2 in 0..d {
                let coeff = t.get(beta, g1, g2);
                if coeff == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for b1 in 0..d {
                    inner += w[(g1 * d + g2) * d + b1] * sigma[(gamma, b1)];
                }
                s += coeff * inner;
            }
        }
        s
    }))
}

/// Both sides of the no-logarithm identity, per upper index α:
/// `(Γ̂^α_{a₁a₂}Γ̂^{a₁}_{a₃a₄}Γ̂^{a₂}_{a₃a₄}, Γ̂^α_{a₁a₂}Γ̂^{a₁}_{a₃a₄}Γ̂^{a₃}_{a₂a₄})`.
pub fn no_log_sides(t_hat: &CouplingTensor) -> Vec<(f64, f64)> {
    let d = t_hat.dim();
    // P^{a₁ a₂} = Σ_{a₃a₄} Γ̂^{a₁}_{a₃a₄} Γ̂^{a₂}_{a₃a₄}
    // Q^{a₁}_{a₂} = Σ_{a₃a₄} Γ̂^{a₁}_{a₃a₄} Γ̂^{a₃}_{a₂a₄}
    let mut p = vec![0.0; d * d];
    let mut q = vec![0.0; d * d];
    for a1 in 0..d {
        for a2 in 0..d {
            let mut sp = 0.0;
            let mut sq = 0.0;
            for a3 in 0..d {
                for a4 in 0..d {
                    sp += t_hat.get(a1, a3, a4) * t_hat.get(a2, a3, a4);
                    sq += t_hat.get(a1, a3, a4) * t_hat.get(a3, a2, a4);
                }
            }
            p[a1 * d + a2] = sp;
            q[a1 * d + a2] = sq;
        }
    }
    (0..d)
        .map(|alpha| {
            let mut l = 0.0;
            let mut r = 0.0;
            for a1 in 0..d {
                for a2 in 0..d {
                    let g = t_hat.get(alpha, a1, a2);
                    l += g * p[a1 * d + a2];
                    r += g * q[a1 * d + a2];
                }
            }
            (l, r)
        })
        .collect()
}

/// Absolute tolerance for [`no_log_condition`]: `1e-10 · max(1, max|Γ̂|)³`.
pub fn default_no_log_tol(t_hat: &CouplingTensor) -> f64 {
    1e-10 * t_hat.max_abs().max(1.0).powi(3)
}

pub fn no_log_condition(t_hat: &CouplingTensor, tol: f64) -> bool {
    no_log_sides(t_hat).iter().all(|(l, r)| (l - r).abs() <= tol)
}

/// Checks `Γ^α_{βγ} = Σ_{α'} (s⁻¹)^α_{α'} s^{α'}_β s^{α'}_γ` entrywise.
pub fn verify_cole_hopf(t: &CouplingTensor, s: &DMatrix<Complex64>, tol: f64) -> Result<bool> {
    let d = t.dim();
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::Dimension(format!("s is {}x{} but d = {d}", s.nrows(), s.ncols())));
    }
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cole–Hopf matrix s is not invertible".into()))?;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for ap in 0..d {
                    acc += s_inv[(a, ap)] * s[(ap, b)] * s[(ap, c)];
                }
                if (acc - Complex64::new(t.get(a, b, c), 0.0)).norm() > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Drift constant `c^α = (1/24) σ^α_β Γ̂^β_{α₁α₂} Γ̂^{α₁}_{β₁β₂} Γ̂^{α₂}_{β₁β₂}`.
///
/// Refuses inputs whose transformed tensor is not trilinear within `tol`.
pub fn c_shift(t: &CouplingTensor, dp: &DiffusionPair, tol: f64) -> Result<DVector<f64>> {
    let t_hat = hat_transform(t, dp)?;
    let defect = trilinear_defect(&t_hat);
    if defect > tol {
        return Err(Error::NotTrilinear { defect });
    }
    let d = t.dim();
    let mut inner = DVector::zeros(d);
    for beta in 0..d {
        let mut s = 0.0;
        for (a1, a2, p) in pairs(&t_hat) {
            s += t_hat.get(beta, a1, a2) * p;
        }
        inner[beta] = s;
    }
    Ok(dp.sigma() * inner / 24.0)
}

/// `(a₁, a₂, Σ_{b₁b₂} Γ̂^{a₁}_{b₁b₂} Γ̂^{a₂}_{b₁b₂})` for every pair.
fn pairs(t_hat: &CouplingTensor) -> Vec<(usize, usize, f64)> {
    let d = t_hat.dim();
    let mut out = Vec::with_capacity(d * d);
    for a1 in 0..d {
        for a2 in 0..d {
            let mut s = 0.0;
            for b1 in 0..d {
                for b2 in 0..d {
                    s += t_hat.get(a1, b1, b2) * t_hat.get(a2, b1, b2);
                }
            }
            out.push((a1, a2, s));
        }
    }
    out
}

/// The same constant assembled as `(1/24) Γ^α_{βγ} F^{βγ}`.
pub fn c_shift_from_f(t: &CouplingTensor, dp: &DiffusionPair) -> Result<DVector<f64>> {
    let f = f_matrix(t, dp)?;
    Ok(t.contract_lower(&f) / 24.0)
}

/// Summary of every algebraic property of a tensor/diffusion pair.
#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub is_bilinear: bool,
    pub is_trilinear: bool,
    pub satisfies_no_log: bool,
    pub f_matrix: Vec<Vec<f64>>,
    pub g_matrix: Vec<Vec<f64>>,
    /// Absent when the trilinear condition fails.
    pub c_shift: Option<Vec<f64>>,
    pub hat_gamma: Vec<Vec<Vec<f64>>>,
    pub trilinear_defect: f64,
    pub f_minus_g_max: f64,
}

pub fn analyze(t: &CouplingTensor, dp: &DiffusionPair, rel_tol: f64) -> Result<TensorReport> {
    let is_bilinear = validate_bilinear(t);
    if !is_bilinear {
        return Err(Error::NotBilinear);
    }
    let t_hat = hat_transform(t, dp)?;
    let tol = t_hat.scaled_tol(rel_tol);
    let defect = trilinear_defect(&t_hat);
    let is_trilinear = defect <= tol;
    let f = f_matrix(t, dp)?;
    let g = g_matrix(t, dp)?;
    let c = if is_trilinear { Some(c_shift(t, dp, tol)?.iter().copied().collect()) } else { None };
    let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(TensorReport {
        is_bilinear,
        is_trilinear,
        satisfies_no_log: no_log_condition(&t_hat, default_no_log_tol(&t_hat)),
        f_matrix: rows(&f),
        g_matrix: rows(&g),
        c_shift: c,
        hat_gamma: t_hat.to_nested(),
        trilinear_defect: defect,
        f_minus_g_max: (&f - &g).amax(),
    })
}

/// Random inputs for property tests and experiments.
pub mod sample {
    use super::*;

    /// Uniform entries in `[-1, 1]`, symmetrised over all six index permutations.
    pub fn fully_symmetric<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CouplingTensor {
        let raw = CouplingTensor::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0));
        CouplingTensor::from_fn(d, |a, b, c| {
            // evaluate at the sorted triple so every permutation rounds alike
            let mut i = [a, b, c];
            i.sort_unstable();
            let [a, b, c] = i;
            (raw.get(a, b, c)
                + raw.get(a, c, b)
                + raw.get(b, a, c)
                + raw.get(b, c, a)
                + raw.get(c, a, b)
                + raw.get(c, b, a))
                / 6.0
        })
    }

    /// Symmetric in the lower indices only; generically not trilinear.
    pub fn bilinear<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CouplingTensor {
        let raw = CouplingTensor::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0));
        CouplingTensor::from_fn(d, |a, b, c| 0.5 * (raw.get(a, b, c) + raw.get(a, c, b)))
    }

    /// `σ = I + 0.5·U/√d` with `U` uniform in `[-1,1]`, resampled until its
    /// condition number is below 10.
    pub fn diffusion<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DiffusionPair {
        loop {
            let u = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let sigma = DMatrix::identity(d, d) + u * (0.5 / (d as f64).sqrt());
            let sv = sigma.clone().singular_values();
            let cond = sv.max() / sv.min();
            if cond.is_finite() && cond < 10.0 {
                if let Ok(dp) = DiffusionPair::new(sigma) {
                    return dp;
                }
            }
        }
    }

    /// A tensor whose transform under `dp` is fully symmetric: draw the
    /// symmetric `Γ̂` and pull it back with the inverse change of basis.
    pub fn trilinear<R: Rng + ?Sized>(rng: &mut R, dp: &DiffusionPair) -> CouplingTensor {
        let hat = fully_symmetric(rng, dp.dim());
        change_basis(&hat, dp.sigma(), dp.tau())
    }
}
