//! Random inputs: white-noise increments per Fourier mode, the Gaussian
//! measure `μ_A`, and exact Ornstein–Uhlenbeck transitions.
//!
//! Every stepper consumes exactly one [`NoiseIncrement`] per step, so two
//! schemes fed the same increments see the same Brownian path.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mollifier::Mollifier;
use crate::spectral::SpectralField;
use crate::tensor::DiffusionPair;

/// A reproducible stream: ChaCha20 keyed by `seed`, on stream `stream_id`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// Brownian increments `dW^{β,k}` over one step of length `dt`:
/// `E[dW^{β,k} conj(dW^{γ,k})] = δ^{βγ} dt`, the zero mode real.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    pub dw: SpectralField,
}

impl NoiseIncrement {
    /// `dW / √dt`: standard complex normals, `E|ζ|² = 1`.
    pub fn standardized(&self, a: usize, k: usize) -> Complex64 {
        self.dw.get(a, k) / self.dt.sqrt()
    }
}

/// Draws mode by mode (`k` outer, component inner): zero mode `N(0, dt)`,
/// real and imaginary parts of `k > 0` independent `N(0, dt/2)`.
pub fn sample_noise(rng: &mut RngStream, k: usize, d: usize, dt: f64) -> NoiseIncrement {
    assert!(dt > 0.0, "dt must be positive");
    let mut dw = SpectralField::zeros(d, k);
    let s0 = dt.sqrt();
    let s = (0.5 * dt).sqrt();
    for j in 0..=k {
        for a in 0..d {
            let v = if j == 0 {
                Complex64::new(s0 * rng.normal(), 0.0)
            } else {
                let re = rng.normal();
                let im = rng.normal();
                Complex64::new(s * re, s * im)
            };
            dw.set(a, j, v);
        }
    }
    NoiseIncrement { dt, dw }
}

/// `dW^{β,k} ↦ φ(εk) dW^{β,k}`.
pub fn mollify_noise(n: &NoiseIncrement, m: &Mollifier) -> NoiseIncrement {
    NoiseIncrement { dt: n.dt, dw: n.dw.multiply(|k| m.at(k as i64)) }
}

/// Lower Cholesky factor of `A`.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(a.clone()).map(|c| c.l()).ok_or(Error::NotPositiveDefinite)
}

/// One sample of `μ_A` on `|k| ≤ K`: `û(k) = L(g₁ + ig₂)/√2` for `k > 0`,
/// `û(0) = 0`.
pub fn sample_mu_a(rng: &mut RngStream, dp: &DiffusionPair, k: usize) -> Result<SpectralField> {
    let l = cholesky(dp.a())?;
    Ok(sample_with_factor(rng, &l, k))
}

fn sample_with_factor(rng: &mut RngStream, l: &DMatrix<f64>, k: usize) -> SpectralField {
    let d = l.nrows();
    let mut out = SpectralField::zeros(d, k);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for j in 1..=k {
        let g1 = DVector::from_fn(d, |_, _| rng.normal());
        let g2 = DVector::from_fn(d, |_, _| rng.normal());
        let (r, i) = (l * g1, l * g2);
        for a in 0..d {
            out.set(a, j, Complex64::new(h * r[a], h * i[a]));
        }
    }
    out
}

/// Stationary law of the (optionally mollified) OU field: covariance
/// `A φ²(εk)` per mode, zero mean.
pub fn sample_stationary_ou(
    rng: &mut RngStream,
    dp: &DiffusionPair,
    k: usize,
    m: Option<&Mollifier>,
) -> Result<SpectralField> {
    let u = sample_mu_a(rng, dp, k)?;
    Ok(match m {
        Some(m) => u.multiply(|j| m.at(j as i64)),
        None => u,
    })
}

/// Heat decay `e^{−2π²k²t}`.
#[inline]
pub fn heat_decay(k: usize, t: f64) -> f64 {
    (-2.0 * PI * PI * (k * k) as f64 * t).exp()
}

/// Standard deviation of `∫₀^dt e^{−2π²k²(dt−s)} dB_s` for a standard
/// Brownian motion; `√dt` at `k = 0`.
#[inline]
pub fn convolution_std(k: usize, dt: f64) -> f64 {
    if k == 0 {
        return dt.sqrt();
    }
    let two_lambda = 4.0 * PI * PI * (k * k) as f64;
    (-(-two_lambda * dt).exp_m1() / two_lambda).sqrt()
}

/// Exact stochastic convolution of the height noise `σ φ(εD) ξ` over one
/// step, built from the increments: mode `k` is `σ ζ(k) φ(εk) s_k` with
/// `ζ = dW/√dt` and `s_k` from [`convolution_std`].
pub fn height_noise(n: &NoiseIncrement, sigma: &DMatrix<f64>, m: Option<&Mollifier>) -> SpectralField {
    let d = n.dw.dim();
    let k = n.dw.max_mode();
    let mut out = SpectralField::zeros(d, k);
    let inv = 1.0 / n.dt.sqrt();
    for j in 0..=k {
        let f = convolution_std(j, n.dt) * m.map_or(1.0, |m| m.at(j as i64)) * inv;
        if f == 0.0 {
            continue;
        }
        for a in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..d {
                acc += n.dw.get(b, j) * sigma[(a, b)];
            }
            out.set(a, j, acc * f);
        }
    }
    out
}

/// Exact stochastic convolution of the Burgers noise `σ ∂ₓ φ(εD) ξ`: the
/// derivative of [`height_noise`]. Per mode its covariance is
/// `A φ²(εk)(1 − e^{−4π²k²dt})`.
pub fn burgers_noise(n: &NoiseIncrement, sigma: &DMatrix<f64>, m: Option<&Mollifier>) -> SpectralField {
    height_noise(n, sigma, m).derivative()
}

/// Exact OU transition `∂ₜu = ½∂ₓ²u + σ∂ₓφ(εD)ξ` with given increments.
pub fn ou_step_with(f: &SpectralField, dp: &DiffusionPair, n: &NoiseIncrement, m: Option<&Mollifier>) -> SpectralField {
    let mut out = f.multiply(|k| heat_decay(k, n.dt));
    out.axpy(1.0, &burgers_noise(n, dp.sigma(), m));
    out
}

/// Exact OU transition with fresh increments drawn from `rng`.
pub fn ou_step(
    f: &SpectralField,
    dp: &DiffusionPair,
    rng: &mut RngStream,
    dt: f64,
    m: Option<&Mollifier>,
) -> SpectralField {
    let n = sample_noise(rng, f.max_mode(), f.dim(), dt);
    ou_step_with(f, dp, &n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollifier::MollifierSymbol;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..5).map(|_| c.normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn noise_moments() {
        let mut rng = RngStream::new(1, 0);
        let dt = 0.01;
        let n = 100_000;
        let (mut abs2, mut pseudo_re, mut pseudo_im, mut cross, mut zero) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let w = sample_noise(&mut rng, 2, 2, dt);
            let z = w.dw.get(0, 1);
            abs2.push(z.norm_sqr());
            pseudo_re.push((z * z).re);
            pseudo_im.push((z * z).im);
            cross.push((z * w.dw.get(1, 1).conj()).re);
            zero.push(w.dw.get(0, 0).re.powi(2));
            assert_eq!(w.dw.get(1, 0).im, 0.0);
        }
        for (xs, target) in [(&abs2, dt), (&pseudo_re, 0.0), (&pseudo_im, 0.0), (&cross, 0.0), (&zero, dt)] {
            let (m, se) = mean_se(xs);
            assert!((m - target).abs() <= 4.0 * se, "{m} vs {target} ± {se}");
        }
    }

    #[test]
    fn mollified_noise_variance() {
        let m = Mollifier::new(MollifierSymbol::Gaussian, 0.3);
        let mut rng = RngStream::new(2, 0);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| mollify_noise(&sample_noise(&mut rng, 3, 1, 1.0), &m).dw.get(0, 3).norm_sqr())
            .collect();
        let (mean, se) = mean_se(&xs);
        let target = m.at(3).powi(2);
        assert!((mean - target).abs() <= 4.0 * se);

        let flat = Mollifier::new(MollifierSymbol::Flat, 0.3);
        let w = sample_noise(&mut rng, 3, 2, 0.1);
        assert_eq!(mollify_noise(&w, &flat), w);
    }

    #[test]
    fn mu_a_covariance() {
        let dp = DiffusionPair::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap();
        let a = dp.a().clone();
        let mut rng = RngStream::new(3, 0);
        let n = 20_000;
        let samples: Vec<SpectralField> = (0..n).map(|_| sample_mu_a(&mut rng, &dp, 2).unwrap()).collect();
        assert!(samples.iter().all(|s| s.is_zero_mean()));
        for (x, y) in [(0, 0), (0, 1), (1, 1)] {
            let xs: Vec<f64> = samples.iter().map(|s| (s.get(x, 2) * s.get(y, 2).conj()).re).collect();
            let (m, se) = mean_se(&xs);
            assert!((m - a[(x, y)]).abs() <= 4.0 * se, "A[{x}{y}]: {m} ± {se}");
            let ps: Vec<f64> = samples.iter().map(|s| (s.get(x, 1) * s.get(y, 1)).re).collect();
            let (m, se) = mean_se(&ps);
            assert!(m.abs() <= 4.0 * se);
        }
    }

    #[test]
    fn cholesky_failure() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&bad), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn ou_mean_decay_and_stationarity() {
        let dp = DiffusionPair::identity(1);
        let mut rng = RngStream::new(4, 0);
        let dt = 0.003;
        let n = 20_000;
        let mut start = SpectralField::zeros(1, 4);
        start.set(0, 2, Complex64::new(1.0, -0.5));
        let mut re = Vec::new();
        let mut var = Vec::new();
        for _ in 0..n {
            re.push(ou_step(&start, &dp, &mut rng, dt, None).get(0, 2).re);
            let u = sample_mu_a(&mut rng, &dp, 4).unwrap();
            var.push(ou_step(&u, &dp, &mut rng, dt, None).get(0, 3).norm_sqr());
        }
        let (m, se) = mean_se(&re);
        assert!((m - heat_decay(2, dt)).abs() <= 4.0 * se);
        let (m, se) = mean_se(&var);
        assert!((m - 1.0).abs() <= 4.0 * se);
    }

    #[test]
    fn long_step_forgets_the_start() {
        let dp = DiffusionPair::identity(1);
        let m = Mollifier::new(MollifierSymbol::Gaussian, 0.2);
        let mut rng = RngStream::new(5, 0);
        let mut start = SpectralField::zeros(1, 3);
        start.set(0, 1, Complex64::new(50.0, 0.0));
        let xs: Vec<f64> = (0..20_000).map(|_| ou_step(&start, &dp, &mut rng, 10.0, Some(&m)).get(0, 1).norm_sqr()).collect();
        let (mean, se) = mean_se(&xs);
        assert!((mean - m.at(1).powi(2)).abs() <= 4.0 * se);
    }

    #[test]
    fn convolution_variance_limits() {
        assert_eq!(convolution_std(0, 0.25), 0.5);
        let k = 3;
        let lam = 2.0 * PI * PI * 9.0;
        assert!((convolution_std(k, 1e3).powi(2) - 1.0 / (2.0 * lam)).abs() < 1e-15);
        assert!((convolution_std(k, 1e-9).powi(2) - 1e-9).abs() < 1e-15);
    }
}
