//! Real-valued periodic fields in Fourier space.
//!
//! Conventions: `û(k) = ∫₀¹ e^{−2πikx} u(x) dx`, so `∂ₓ` is the multiplier
//! `2πik`. Only `k = 0..=K` is stored; `û(−k) = conj(û(k))` is implied and
//! `û(0)` is kept real.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mollifier::CutoffSymbol;
use crate::tensor::CouplingTensor;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `d` components, modes `0..=K` each.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    d: usize,
    k: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self { d, k, coeffs: vec![ZERO; d * (k + 1)] }
    }

    /// Builds `û^α(k) = f(α, k)` for `k ≥ 0`; the imaginary part of the zero
    /// mode is discarded.
    pub fn from_fn(d: usize, k: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(d, k);
        for a in 0..d {
            for j in 0..=k {
                out.set(a, j, f(a, j));
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn max_mode(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, k: usize) -> Complex64 {
        self.coeffs[a * (self.k + 1) + k]
    }

    /// `û^α(k)` for any integer `k`, zero outside the band.
    pub fn mode(&self, a: usize, k: i64) -> Complex64 {
        let j = k.unsigned_abs() as usize;
        if j > self.k {
            return ZERO;
        }
        let v = self.get(a, j);
        if k < 0 {
            v.conj()
        } else {
            v
        }
    }

    #[inline]
    pub fn set(&mut self, a: usize, k: usize, v: Complex64) {
        let v = if k == 0 { Complex64::new(v.re, 0.0) } else { v };
        self.coeffs[a * (self.k + 1) + k] = v;
    }

    pub fn component(&self, a: usize) -> &[Complex64] {
        &self.coeffs[a * (self.k + 1)..(a + 1) * (self.k + 1)]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut [Complex64] {
        let k = self.k;
        &mut self.coeffs[a * (k + 1)..(a + 1) * (k + 1)]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn is_zero_mean(&self) -> bool {
        (0..self.d).all(|a| self.get(a, 0) == ZERO)
    }

    pub fn zero_mean(mut self) -> Self {
        for a in 0..self.d {
            self.set(a, 0, ZERO);
        }
        self
    }

    /// Exact check that every zero mode is real (the only way the stored
    /// representation can violate reality).
    pub fn is_real(&self) -> bool {
        (0..self.d).all(|a| self.get(a, 0).im == 0.0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.d != other.d || self.k != other.k {
            return Err(Error::Dimension(format!(
                "fields differ in shape: (d={}, K={}) vs (d={}, K={})",
                self.d, self.k, other.d, other.k
            )));
        }
        Ok(())
    }

    /// Applies a real even multiplier `m(k)` mode by mode.
    pub fn multiply(&self, m: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        out.multiply_in_place(m);
        out
    }

    pub fn multiply_in_place(&mut self, m: impl Fn(usize) -> f64) {
        let k = self.k;
        for a in 0..self.d {
            for (j, c) in self.coeffs[a * (k + 1)..(a + 1) * (k + 1)].iter_mut().enumerate() {
                *c *= m(j);
            }
        }
    }

    /// `∂ₓ`: `û(k) ↦ 2πik û(k)`.
    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        for a in 0..self.d {
            for (j, c) in out.component_mut(a).iter_mut().enumerate() {
                *c *= Complex64::new(0.0, 2.0 * PI * j as f64);
            }
        }
        out
    }

    /// `P_N = ψ(D/N)`.
    pub fn project_smooth(&self, n: usize, psi: CutoffSymbol) -> Self {
        self.multiply(|k| psi.psi(k as f64 / n as f64))
    }

    /// `Π_N`: keeps `|k| ≤ N`.
    pub fn project_sharp(&self, n: usize) -> Self {
        self.multiply(|k| if k <= n { 1.0 } else { 0.0 })
    }

    /// `Π_N^⊥ = 1 − Π_N`.
    pub fn project_complement(&self, n: usize) -> Self {
        self.multiply(|k| if k > n { 1.0 } else { 0.0 })
    }

    /// Copy with the band changed to `|k| ≤ k_new` (zero-padded or cut).
    pub fn resized(&self, k_new: usize) -> Self {
        Self::from_fn(self.d, k_new, |a, k| if k <= self.k { self.get(a, k) } else { ZERO })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    /// `self += s · other`; shapes must match.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!((self.d, self.k), (other.d, other.k), "axpy on fields of different shape");
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * s;
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { d: self.d, k: self.k, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `∫ u^α u^β dx` summed over all `α = β`, i.e. `Σ_α ‖u^α‖²_{L²}`.
    pub fn norm_sq(&self) -> f64 {
        (0..self.d).map(|a| self.inner_component(self, a, a)).sum()
    }

    /// `⟨f^α, g^β⟩ = ∫ f^α g^β dx = Σ_k f̂^α(k) conj(ĝ^β(k))`.
    pub fn inner_component(&self, g: &Self, a: usize, b: usize) -> f64 {
        let (f, g) = (self.component(a), g.component(b));
        let mut s = f[0].re * g[0].re;
        for (x, y) in f.iter().zip(g).skip(1) {
            s += 2.0 * (x * y.conj()).re;
        }
        s
    }

    /// Largest coefficient difference, for comparisons in tests.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.d, self.k), (other.d, other.k));
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    /// `(k, [(Re û^α, Im û^α); d])` rows for serialisation.
    pub fn spectral_rows(&self) -> Vec<SpectralRow> {
        (0..=self.k)
            .map(|k| SpectralRow {
                k,
                re: (0..self.d).map(|a| self.get(a, k).re).collect(),
                im: (0..self.d).map(|a| self.get(a, k).im).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralRow {
    pub k: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Samples of `d` real components on `M` equispaced points `x_j = j/M`,
/// stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Physical {
    d: usize,
    m: usize,
    data: Vec<f64>,
}

impl Physical {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self { d, m, data: vec![0.0; d * m] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.data[a * self.m..(a + 1) * self.m]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.data[a * self.m..(a + 1) * self.m]
    }

    /// `out^α(x) = s · Σ_{βγ} Γ^α_{βγ} u^β(x) v^γ(x)`.
    pub fn contract(t: &CouplingTensor, u: &Physical, v: &Physical, s: f64) -> Physical {
        let (d, m) = (u.d, u.m);
        let mut out = Physical::zeros(d, m);
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let g = t.get(a, b, c) * s;
                    if g == 0.0 {
                        continue;
                    }
                    let (ub, vc) = (u.component(b), v.component(c));
                    for ((o, x), y) in out.data[a * m..(a + 1) * m].iter_mut().zip(ub).zip(vc) {
                        *o += g * x * y;
                    }
                }
            }
        }
        out
    }

    /// Componentwise `u^α(x) v^α(x)`.
    pub fn pointwise(u: &Physical, v: &Physical) -> Physical {
        Physical {
            d: u.d,
            m: u.m,
            data: u.data.iter().zip(&v.data).map(|(x, y)| x * y).collect(),
        }
    }
}

/// Smallest `2^a 3^b ≥ n`.
pub fn smooth_size(n: usize) -> usize {
    let mut best = usize::MAX;
    let mut p3 = 1usize;
    while p3 < 2 * n.max(1) {
        let mut p = p3;
        while p < n {
            p *= 2;
        }
        best = best.min(p);
        p3 *= 3;
    }
    best
}

/// Grid size that makes quadratic products of band-`K` fields alias-free on
/// `|k| ≤ K`: at least `3K + 1` (and `2K + 2`).
pub fn dealiased_size(k: usize) -> usize {
    smooth_size((3 * k + 1).max(2 * k + 2))
}

/// FFT plans and scratch for one grid size; owned by a single worker.
pub struct PaddedGrid {
    k: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for PaddedGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedGrid").field("k", &self.k).field("m", &self.m).finish()
    }
}

impl Clone for PaddedGrid {
    fn clone(&self) -> Self {
        Self::build(self.k, self.m)
    }
}

impl PaddedGrid {
    /// Dealiased grid for fields on `|k| ≤ K`.
    pub fn new(k: usize) -> Self {
        Self::build(k, dealiased_size(k))
    }

    /// Grid of explicit size `M ≥ 2K + 2`. Products are only alias-free when
    /// `M ≥ 3K + 1`.
    pub fn with_size(k: usize, m: usize) -> Result<Self> {
        if m < 2 * k + 2 {
            return Err(Error::GridTooSmall(format!("M = {m} cannot represent modes up to K = {k} (need M ≥ {})", 2 * k + 2)));
        }
        Ok(Self::build(k, m))
    }

    fn build(k: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { k, m, fwd, inv, buf: vec![ZERO; m], scratch: vec![ZERO; scratch_len] }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn max_mode(&self) -> usize {
        self.k
    }

    pub fn is_dealiased(&self) -> bool {
        self.m > 3 * self.k
    }

    /// Evaluates two real fields at once: `a + ib` is synthesised with one
    /// complex transform and split into real and imaginary parts.
    fn synth_pair(&mut self, a: &[Complex64], b: Option<&[Complex64]>, ua: &mut [f64], ub: Option<&mut [f64]>) {
        let m = self.m;
        self.buf.fill(ZERO);
        let i = Complex64::new(0.0, 1.0);
        for (k, &ca) in a.iter().enumerate() {
            let cb = b.map_or(ZERO, |b| b[k]);
            self.buf[k] += ca + i * cb;
            if k > 0 {
                self.buf[m - k] += ca.conj() + i * cb.conj();
            }
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (u, z) in ua.iter_mut().zip(&self.buf) {
            *u = z.re;
        }
        if let Some(ub) = ub {
            for (u, z) in ub.iter_mut().zip(&self.buf) {
                *u = z.im;
            }
        }
    }

    /// Fourier coefficients `0..=K` of two real signals from one transform.
    fn analyze_pair(&mut self, ua: &[f64], ub: Option<&[f64]>, a: &mut [Complex64], b: Option<&mut [Complex64]>) {
        let m = self.m;
        for (j, z) in self.buf.iter_mut().enumerate() {
            *z = Complex64::new(ua[j], ub.map_or(0.0, |ub| ub[j]));
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let norm = 1.0 / m as f64;
        let kmax = a.len() - 1;
        let mut bb = b;
        for k in 0..=kmax {
            let zk = self.buf[k];
            let zm = self.buf[(m - k) % m].conj();
            a[k] = (zk + zm) * (0.5 * norm);
            if let Some(b) = bb.as_deref_mut() {
                b[k] = (zk - zm) * Complex64::new(0.0, -0.5 * norm);
            }
        }
        a[0].im = 0.0;
        if let Some(b) = bb {
            b[0].im = 0.0;
        }
    }

    /// Grid values of every component.
    pub fn to_physical(&mut self, f: &SpectralField) -> Physical {
        assert!(f.k <= self.k, "field band K = {} exceeds grid band {}", f.k, self.k);
        let mut out = Physical::zeros(f.d, self.m);
        let m = self.m;
        let mut a = 0;
        while a < f.d {
            let (lo, hi) = out.data.split_at_mut((a + 1) * m);
            let ua = &mut lo[a * m..];
            if a + 1 < f.d {
                self.synth_pair(f.component(a), Some(f.component(a + 1)), ua, Some(&mut hi[..m]));
            } else {
                self.synth_pair(f.component(a), None, ua, None);
            }
            a += 2;
        }
        out
    }

    /// Coefficients `|k| ≤ K` of grid values.
    pub fn to_spectral(&mut self, g: &Physical) -> SpectralField {
        assert_eq!(g.m, self.m, "grid size mismatch");
        let mut out = SpectralField::zeros(g.d, self.k);
        let kk = self.k + 1;
        let mut a = 0;
        while a < g.d {
            let (lo, hi) = out.coeffs.split_at_mut((a + 1) * kk);
            let ca = &mut lo[a * kk..];
            if a + 1 < g.d {
                self.analyze_pair(g.component(a), Some(g.component(a + 1)), ca, Some(&mut hi[..kk]));
            } else {
                self.analyze_pair(g.component(a), None, ca, None);
            }
            a += 2;
        }
        out
    }

    /// Componentwise product `f^α g^α`, truncated to `|k| ≤ K`.
    pub fn product(&mut self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        f.check_compatible(g)?;
        if f.k != self.k {
            return Err(Error::Dimension(format!("field band {} does not match grid band {}", f.k, self.k)));
        }
        let (uf, ug) = (self.to_physical(f), self.to_physical(g));
        Ok(self.to_spectral(&Physical::pointwise(&uf, &ug)))
    }

    /// `s · Γ^α_{βγ} u^β v^γ`, truncated to `|k| ≤ K`.
    pub fn contract(&mut self, t: &CouplingTensor, u: &SpectralField, v: &SpectralField, s: f64) -> SpectralField {
        let pu = self.to_physical(u);
        let pv = if std::ptr::eq(u, v) { pu.clone() } else { self.to_physical(v) };
        self.to_spectral(&Physical::contract(t, &pu, &pv, s))
    }
}

/// Samples on `x_j = j/M`, one row per component.
pub fn to_physical(f: &SpectralField, m: usize) -> Result<Vec<Vec<f64>>> {
    let mut grid = PaddedGrid::with_size(f.k, m)?;
    let p = grid.to_physical(f);
    Ok((0..f.d).map(|a| p.component(a).to_vec()).collect())
}

/// Fourier coefficients `|k| ≤ K` of equispaced samples.
pub fn to_spectral(g: &[Vec<f64>], k: usize) -> Result<SpectralField> {
    let d = g.len();
    let m = g.first().map_or(0, |r| r.len());
    if g.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("components have different lengths".into()));
    }
    let mut grid = PaddedGrid::with_size(k, m)?;
    let mut p = Physical::zeros(d, m);
    for (a, row) in g.iter().enumerate() {
        p.component_mut(a).copy_from_slice(row);
    }
    Ok(grid.to_spectral(&p))
}

/// Alias-free componentwise product on a padded grid.
pub fn product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_compatible(g)?;
    PaddedGrid::new(f.k).product(f, g)
}
