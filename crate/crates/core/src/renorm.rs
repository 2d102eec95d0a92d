//! Renormalisation constants as truncated lattice sums.
//!
//! With `p(k) = φ²(εk)` and `Q = k₁² + k₁k₂ + k₂²`, the double sums run over
//! `k₁, k₂, k₁+k₂ ≠ 0`:
//!
//! ```text
//! C  =  1/4π² Σ p(k₁)p(k₂) / Q
//! D  = −1/4π² Σ (k₁+k₂) p(k₁)p(k₂) / (k₁ Q)
//! C̃  =  1/4π² Σ p(k₁)p(k₂)p(k₁+k₂)² / Q
//! D̃  = −1/4π² Σ (k₁+k₂) p(k₁)²p(k₂)p(k₁+k₂) / (k₁ Q)
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mollifier::Symbol;
use crate::tensor::{f_matrix, g_matrix, CouplingTensor, DiffusionPair};

/// Largest radius tried for the single sum `c^ε`.
pub const SINGLE_SUM_LIMIT: usize = 1 << 22;
/// Largest square half-width tried for the double sums.
pub const DOUBLE_SUM_LIMIT: usize = 4096;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Which lattice points enter the double sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `|k₁|, |k₂| ≤ K`.
    Square(usize),
    /// `|k₁|, |k₂|, |k₁+k₂| ≤ K`: the modes a simulation on `|k| ≤ K` can see.
    Band(usize),
}

impl Region {
    fn radius(self) -> usize {
        match self {
            Region::Square(k) | Region::Band(k) => k,
        }
    }
}

/// The four double sums over one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeSums {
    pub c_big: f64,
    pub d_big: f64,
    pub c_tilde: f64,
    pub d_tilde: f64,
}

/// Evaluates all four double sums in one pass over `region`, visiting
/// points in shells of increasing `|k₁| + |k₂|`.
pub fn lattice_sums<S: Symbol + ?Sized>(sym: &S, eps: f64, region: Region) -> LatticeSums {
    let kmax = region.radius();
    let p: Vec<f64> = (0..=2 * kmax).map(|k| sym.phi2(eps * k as f64)).collect();
    let pk = |k: i64| p[k.unsigned_abs() as usize];
    let band = matches!(region, Region::Band(_));
    let (mut c, mut d, mut ct, mut dt) =
        (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    let km = kmax as i64;
    for shell in 2..=2 * km {
        for a in (shell - km).max(1)..=km.min(shell - 1) {
            let b = shell - a;
            for (k1, k2) in [(a, b), (a, -b), (-a, b), (-a, -b)] {
                let k12 = k1 + k2;
                if k12 == 0 || (band && k12.abs() > km) {
                    continue;
                }
                let (p1, p2, p12) = (pk(k1), pk(k2), pk(k12));
                let w = p1 * p2;
                if w == 0.0 {
                    continue;
                }
                let q = (k1 * k1 + k1 * k2 + k2 * k2) as f64;
                let r = k12 as f64 / (k1 as f64 * q);
                c.add(w / q);
                d.add(w * r);
                ct.add(w * p12 * p12 / q);
                dt.add(w * p1 * p12 * r);
            }
        }
    }
    let s = 1.0 / (4.0 * PI * PI);
    LatticeSums {
        c_big: s * c.value(),
        d_big: -s * d.value(),
        c_tilde: s * ct.value(),
        d_tilde: -s * dt.value(),
    }
}

fn check_args(eps: f64, tol: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive and finite, got {eps}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidInput(format!("tol must be positive and finite, got {tol}")));
    }
    Ok(())
}

/// `Σ_{0<|k|≤K} φ²(εk)`.
pub fn c_eps_band<S: Symbol + ?Sized>(sym: &S, eps: f64, k: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for j in (1..=k).rev() {
        acc.add(2.0 * sym.phi2(eps * j as f64));
    }
    acc.value()
}

/// `c^ε = Σ_{k≠0} φ²(εk)` with the radius and the tail bound that was used.
pub fn c_eps_truncated<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<(f64, usize, f64)> {
    check_args(eps, tol)?;
    let k = (0..=SINGLE_SUM_LIMIT)
        .find(|&k| sym.tail_bound(eps, k) <= tol)
        .ok_or(Error::Truncation { k: SINGLE_SUM_LIMIT, bound: sym.tail_bound(eps, SINGLE_SUM_LIMIT), tol })?;
    Ok((c_eps_band(sym, eps, k), k, sym.tail_bound(eps, k)))
}

pub fn c_eps<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<f64> {
    c_eps_truncated(sym, eps, tol).map(|v| v.0)
}

/// Bound on what the double sums lose outside the square `|k₁|,|k₂| ≤ K`.
///
/// Every summand is at most `p(k₁)p(k₂)/3π²` in absolute value (for `|φ| ≤ 1`),
/// and the discarded points have at least one coordinate beyond `K`.
pub fn double_sum_error<S: Symbol + ?Sized>(sym: &S, eps: f64, k: usize) -> f64 {
    let tail = sym.tail_bound(eps, k);
    if tail == 0.0 {
        return 0.0;
    }
    let inner = c_eps_band(sym, eps, k);
    2.0 / (3.0 * PI * PI) * tail * (inner + tail)
}

/// Smallest square half-width whose [`double_sum_error`] is below `tol`.
pub fn choose_truncation<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<(usize, f64)> {
    check_args(eps, tol)?;
    let mut inner = 0.0;
    for k in 0..=DOUBLE_SUM_LIMIT {
        if k > 0 {
            inner += 2.0 * sym.phi2(eps * k as f64);
        }
        let tail = sym.tail_bound(eps, k);
        let err = if tail == 0.0 { 0.0 } else { 2.0 / (3.0 * PI * PI) * tail * (inner + tail) };
        if err <= tol {
            return Ok((k, err));
        }
    }
    Err(Error::Truncation {
        k: DOUBLE_SUM_LIMIT,
        bound: double_sum_error(sym, eps, DOUBLE_SUM_LIMIT),
        tol,
    })
}

/// All scalar constants at one `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenormValues {
    pub eps: f64,
    pub c_eps: f64,
    pub c_big: f64,
    pub d_big: f64,
    pub c_tilde: f64,
    pub d_tilde: f64,
    pub truncation_k: usize,
    pub est_truncation_error: f64,
}

impl RenormValues {
    pub fn c_plus_2d(&self) -> f64 {
        self.c_big + 2.0 * self.d_big
    }

    pub fn c_tilde_plus_2d_tilde(&self) -> f64 {
        self.c_tilde + 2.0 * self.d_tilde
    }
}

/// Constants with the double sums truncated so the discarded part is below
/// `tol`; `est_truncation_error` is the larger of the two truncation bounds.
pub fn renorm_values<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<RenormValues> {
    let (c, _, c_err) = c_eps_truncated(sym, eps, tol)?;
    let (k, err) = choose_truncation(sym, eps, tol)?;
    let s = lattice_sums(sym, eps, Region::Square(k));
    Ok(RenormValues {
        eps,
        c_eps: c,
        c_big: s.c_big,
        d_big: s.d_big,
        c_tilde: s.c_tilde,
        d_tilde: s.d_tilde,
        truncation_k: k,
        est_truncation_error: err.max(c_err),
    })
}

/// Constants restricted to the modes `|k| ≤ K` of a simulation. Nothing is
/// truncated relative to that band, so the error field is zero.
pub fn band_values<S: Symbol + ?Sized>(sym: &S, eps: f64, k: usize) -> RenormValues {
    let s = lattice_sums(sym, eps, Region::Band(k));
    RenormValues {
        eps,
        c_eps: c_eps_band(sym, eps, k),
        c_big: s.c_big,
        d_big: s.d_big,
        c_tilde: s.c_tilde,
        d_tilde: s.d_tilde,
        truncation_k: k,
        est_truncation_error: 0.0,
    }
}

pub fn c_big<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<f64> {
    renorm_values(sym, eps, tol).map(|v| v.c_big)
}

pub fn d_big<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<f64> {
    renorm_values(sym, eps, tol).map(|v| v.d_big)
}

pub fn c_tilde<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<f64> {
    renorm_values(sym, eps, tol).map(|v| v.c_tilde)
}

pub fn d_tilde<S: Symbol + ?Sized>(sym: &S, eps: f64, tol: f64) -> Result<f64> {
    renorm_values(sym, eps, tol).map(|v| v.d_tilde)
}

/// `(B, B̃) = (F·C + 2G·D, F·C̃ + 2G·D̃)` from already evaluated constants.
pub fn b_matrices_from(t: &CouplingTensor, dp: &DiffusionPair, v: &RenormValues) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f = f_matrix(t, dp)?;
    let g = g_matrix(t, dp)?;
    let b = &f * v.c_big + &g * (2.0 * v.d_big);
    let bt = &f * v.c_tilde + &g * (2.0 * v.d_tilde);
    Ok((b, bt))
}

pub fn b_matrices<S: Symbol + ?Sized>(
    t: &CouplingTensor,
    dp: &DiffusionPair,
    sym: &S,
    eps: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !crate::tensor::validate_bilinear(t) {
        return Err(Error::NotBilinear);
    }
    b_matrices_from(t, dp, &renorm_values(sym, eps, tol)?)
}

/// Two-point Richardson extrapolation to `ε = 0` assuming an error term of
/// order `ε^order`.
pub fn richardson(coarse: (f64, f64), fine: (f64, f64), order: f64) -> f64 {
    let (e_c, v_c) = coarse;
    let (e_f, v_f) = fine;
    let r = (e_c / e_f).powf(order);
    (r * v_f - v_c) / (r - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollifier::MollifierSymbol::{Flat, Gaussian, RaisedCosine};

    /// Plain double loop, no shells, no compensation.
    fn brute(eps: f64, k: i64) -> LatticeSums {
        let p = |j: i64| (-2.0 * eps * eps * (j * j) as f64).exp();
        let (mut c, mut d, mut ct, mut dt) = (0.0, 0.0, 0.0, 0.0);
        for k1 in -k..=k {
            for k2 in -k..=k {
                if k1 == 0 || k2 == 0 || k1 + k2 == 0 {
                    continue;
                }
                let q = (k1 * k1 + k1 * k2 + k2 * k2) as f64;
                let w = p(k1) * p(k2);
                c += w / q;
                d += (k1 + k2) as f64 * w / (k1 as f64 * q);
                ct += w * p(k1 + k2).powi(2) / q;
                dt += (k1 + k2) as f64 * p(k1).powi(2) * p(k2) * p(k1 + k2) / (k1 as f64 * q);
            }
        }
        let s = 1.0 / (4.0 * PI * PI);
        LatticeSums { c_big: s * c, d_big: -s * d, c_tilde: s * ct, d_tilde: -s * dt }
    }

    #[test]
    fn c_eps_gaussian_unit_scale() {
        let oracle: f64 = (1..=50).map(|k| 2.0 * (-2.0 * (k * k) as f64).exp()).sum();
        let v = c_eps(&Gaussian, 1.0, 1e-12).unwrap();
        assert!((v - oracle).abs() <= 1e-12);
        assert!((v - 0.2713416).abs() < 1e-7);
    }

    #[test]
    fn compact_symbol_kills_everything_at_large_eps() {
        let v = renorm_values(&RaisedCosine, 2.0, 1e-12).unwrap();
        assert_eq!(v.c_eps, 0.0);
        assert_eq!((v.c_big, v.d_big, v.c_tilde, v.d_tilde), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn c_eps_scales_like_l2_norm() {
        let eps = 0.01;
        let v = c_eps(&Gaussian, eps, 1e-12).unwrap();
        let limit = (PI / 2.0).sqrt();
        assert!((eps * v - limit).abs() / limit < 0.01);
    }

    #[test]
    fn flat_symbol_fails_truncation() {
        assert!(matches!(c_eps(&Flat, 0.1, 1e-6), Err(Error::Truncation { .. })));
        assert!(matches!(renorm_values(&Flat, 0.1, 1e-6), Err(Error::Truncation { .. })));
        assert!(matches!(c_eps(&Gaussian, 0.0, 1e-6), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn matches_brute_force_square() {
        let b = brute(0.1, 200);
        let s = lattice_sums(&Gaussian, 0.1, Region::Square(200));
        for (x, y) in [(s.c_big, b.c_big), (s.d_big, b.d_big), (s.c_tilde, b.c_tilde), (s.d_tilde, b.d_tilde)] {
            assert!((x - y).abs() <= 1e-12 * y.abs(), "{x} vs {y}");
        }
        let v = renorm_values(&Gaussian, 0.1, 1e-13).unwrap();
        assert!((v.c_big - b.c_big).abs() <= 1e-12);
    }

    #[test]
    fn frozen_values() {
        // independent double-precision evaluation, frozen
        let v = renorm_values(&Gaussian, 0.25, 1e-14).unwrap();
        assert!((v.c_big - 0.05480).abs() < 5e-5, "{}", v.c_big);
        assert!((v.d_big + 0.04978).abs() < 5e-5, "{}", v.d_big);
        assert!((v.c_tilde - 0.02425).abs() < 5e-5, "{}", v.c_tilde);
        let v = renorm_values(&Gaussian, 0.1, 1e-14).unwrap();
        assert!((v.c_big - 0.16525).abs() < 5e-5);
        assert!((v.d_big + 0.11582).abs() < 5e-5);
    }

    #[test]
    fn d_is_negative() {
        for eps in [0.1, 0.05] {
            assert!(d_big(&Gaussian, eps, 1e-12).unwrap() < 0.0);
        }
    }

    #[test]
    fn tilde_sums_cancel() {
        for eps in [0.25, 0.1, 0.05] {
            let v = renorm_values(&Gaussian, eps, 1e-13).unwrap();
            let r = v.c_tilde_plus_2d_tilde();
            assert!(r.abs() <= 1e-10 * v.c_tilde.abs() + v.est_truncation_error, "eps={eps}: {r}");
            assert!(v.c_tilde.abs() <= v.c_big.abs());
        }
        // the band region is closed under (k₁, k₂, −k₁−k₂) permutations
        let s = lattice_sums(&RaisedCosine, 0.05, Region::Band(10));
        assert!((s.c_tilde + 2.0 * s.d_tilde).abs() <= 1e-14 * s.c_tilde);
    }

    #[test]
    fn c_plus_2d_collapses_to_a_single_sum() {
        // Symmetrising the D summand over k₁ ↔ k₂ and resumming along k₁+k₂ = a
        // leaves −1/4π² Σ_{a≠0} p(a)² / a² for the band region.
        for eps in [0.25, 0.1] {
            let k = 400usize;
            let s = lattice_sums(&Gaussian, eps, Region::Band(k));
            let oracle: f64 = -(1..=k)
                .map(|a| 2.0 * (-4.0 * eps * eps * (a * a) as f64).exp() / (a * a) as f64)
                .sum::<f64>()
                / (4.0 * PI * PI);
            let got = s.c_big + 2.0 * s.d_big;
            assert!((got - oracle).abs() < 1e-12, "eps={eps}: {got} vs {oracle}");
        }
    }

    #[test]
    fn richardson_reaches_minus_one_twelfth() {
        let v: Vec<f64> = [0.08, 0.04, 0.02]
            .iter()
            .map(|&e| renorm_values(&Gaussian, e, 1e-13).unwrap().c_plus_2d())
            .collect();
        assert!(v[0].abs() < v[1].abs() && v[1].abs() < v[2].abs());
        let lim = richardson((0.04, v[1]), (0.02, v[2]), 1.0);
        assert!((lim + 1.0 / 12.0).abs() < 1e-3, "{lim}");
    }

    #[test]
    fn band_and_square_agree_when_symbol_is_negligible() {
        let a = band_values(&Gaussian, 0.25, 64);
        let b = renorm_values(&Gaussian, 0.25, 1e-14).unwrap();
        assert!((a.c_big - b.c_big).abs() < 1e-13);
        assert!((a.d_big - b.d_big).abs() < 1e-13);
        assert!((a.c_eps - b.c_eps).abs() < 1e-13);
    }

    #[test]
    fn b_matrices_examples() {
        let id2 = DiffusionPair::identity(2);
        let (b, bt) = b_matrices(&CouplingTensor::trilinear_example(), &id2, &Gaussian, 0.1, 1e-12).unwrap();
        assert!(bt.amax() <= 1e-10, "{bt}");
        assert!(b.amax() > 0.0);

        let (b, bt) = b_matrices(&CouplingTensor::zeros(2), &id2, &Gaussian, 0.1, 1e-12).unwrap();
        assert_eq!((b.amax(), bt.amax()), (0.0, 0.0));

        let v = renorm_values(&Gaussian, 0.1, 1e-12).unwrap();
        let (b, _) = b_matrices(&CouplingTensor::scalar(1.0), &DiffusionPair::identity(1), &Gaussian, 0.1, 1e-12).unwrap();
        assert_eq!(b[(0, 0)], v.c_plus_2d());
    }

    #[test]
    fn richardson_is_exact_for_linear_error() {
        let f = |e: f64| 3.0 + 2.0 * e;
        assert!((richardson((0.2, f(0.2)), (0.1, f(0.1)), 1.0) - 3.0).abs() < 1e-14);
    }
}
