use kpz_core::mollifier::{CutoffSymbol, MollifierSymbol};
use kpz_core::renorm::{b_matrices, c_big, d_big, lattice_sums, renorm_values, Region};
use kpz_core::spectral::product;
use kpz_core::tensor::{
    c_shift, c_shift_from_f, default_no_log_tol, f_matrix, g_matrix, hat_transform, is_trilinear, no_log_condition,
    sample,
};
use kpz_core::{CouplingTensor, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_diff(a: &CouplingTensor, b: &CouplingTensor) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hat_transform_inverts(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let t = sample::bilinear(&mut r, d);
        let dp = sample::diffusion(&mut r, d);
        let back = hat_transform(&hat_transform(&t, &dp).unwrap(), &dp.inverse()).unwrap();
        prop_assert!(max_diff(&back, &t) <= 1e-12 * t.max_abs().max(1.0));
    }

    #[test]
    fn trilinear_inputs_have_f_equal_g(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let dp = sample::diffusion(&mut r, d);
        let t = sample::trilinear(&mut r, &dp);
        let f = f_matrix(&t, &dp).unwrap();
        let g = g_matrix(&t, &dp).unwrap();
        prop_assert!((&f - &g).amax() <= 1e-12 * (1.0 + f.amax()));
    }

    #[test]
    fn drift_constant_forms_agree(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let dp = sample::diffusion(&mut r, d);
        let t = sample::trilinear(&mut r, &dp);
        let tol = hat_transform(&t, &dp).unwrap().scaled_tol(1e-10);
        let a = c_shift(&t, &dp, tol).unwrap();
        let b = c_shift_from_f(&t, &dp).unwrap();
        prop_assert!((&a - &b).amax() <= 1e-12 * (1.0 + b.amax()));
    }

    #[test]
    fn trilinear_implies_no_log(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let dp = sample::diffusion(&mut r, d);
        let hat = hat_transform(&sample::trilinear(&mut r, &dp), &dp).unwrap();
        prop_assert!(is_trilinear(&hat, hat.scaled_tol(1e-10)));
        prop_assert!(no_log_condition(&hat, default_no_log_tol(&hat)));
    }

    #[test]
    fn f_and_g_ignore_lower_index_order(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let dp = sample::diffusion(&mut r, d);
        let t = sample::bilinear(&mut r, d);
        let s = t.swap_lower();
        prop_assert_eq!(f_matrix(&t, &dp).unwrap(), f_matrix(&s, &dp).unwrap());
        prop_assert_eq!(g_matrix(&t, &dp).unwrap(), g_matrix(&s, &dp).unwrap());
    }

    #[test]
    fn dealiased_product_matches_convolution(seed in any::<u64>(), k in 1usize..33) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut field = || SpectralField::from_fn(1, k, |_, j| {
            let im = if j == 0 { 0.0 } else { r.random_range(-1.0..1.0) };
            Complex64::new(r.random_range(-1.0..1.0), im)
        });
        let (f, g) = (field(), field());
        let p = product(&f, &g).unwrap();
        let mut scale = 0.0_f64;
        for j in 0..=k as i64 {
            let mut s = Complex64::new(0.0, 0.0);
            for k1 in -(k as i64)..=k as i64 {
                s += f.mode(0, k1) * g.mode(0, j - k1);
            }
            scale = scale.max(s.norm());
            prop_assert!((p.get(0, j as usize) - s).norm() <= 1e-12 * (1.0 + scale) * (k as f64));
        }
    }
}

#[test]
fn generic_bilinear_inputs_break_f_equal_g() {
    let mut r = rng(41);
    let dp = kpz_core::DiffusionPair::identity(2);
    let broken = (0..100)
        .filter(|_| {
            let t = sample::bilinear(&mut r, 2);
            let (f, g) = (f_matrix(&t, &dp).unwrap(), g_matrix(&t, &dp).unwrap());
            (&f - &g).amax() > 1e-12 * (1.0 + f.amax())
        })
        .count();
    assert!(broken >= 99, "{broken}");
}

#[test]
fn truncation_is_monotone_within_its_error() {
    let sym = MollifierSymbol::Gaussian;
    for eps in [0.25, 0.1] {
        let v = renorm_values(&sym, eps, 1e-12).unwrap();
        for extra in [1, 5, 20] {
            let k = v.truncation_k + extra;
            let s = lattice_sums(&sym, eps, Region::Square(k));
            let tol = v.est_truncation_error + 1e-13;
            assert!((s.c_big - v.c_big).abs() <= tol);
            assert!((s.d_big - v.d_big).abs() <= tol);
            assert!((s.c_tilde - v.c_tilde).abs() <= tol);
            assert!((s.d_tilde - v.d_tilde).abs() <= tol);
        }
    }
}

#[test]
fn c_plus_2d_approaches_minus_one_twelfth_monotonically() {
    let sym = MollifierSymbol::Gaussian;
    let gaps: Vec<f64> = [0.16, 0.08, 0.04, 0.02]
        .iter()
        .map(|&e| (c_big(&sym, e, 1e-10).unwrap() + 2.0 * d_big(&sym, e, 1e-10).unwrap() + 1.0 / 12.0).abs())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    // first order: halving ε roughly halves the gap
    for w in gaps.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.5, "{gaps:?}");
    }
}

#[test]
fn scalar_counterterm_matrices_are_the_constants() {
    let sym = MollifierSymbol::Gaussian;
    let one = CouplingTensor::scalar(1.0);
    let dp = kpz_core::DiffusionPair::identity(1);
    let (b, bt) = b_matrices(&one, &dp, &sym, 0.1, 1e-10).unwrap();
    let v = renorm_values(&sym, 0.1, 1e-10).unwrap();
    assert!((b[(0, 0)] - v.c_plus_2d()).abs() <= 1e-14);
    assert!((bt[(0, 0)] - v.c_tilde_plus_2d_tilde()).abs() <= 1e-14);
}

#[test]
fn smooth_projection_converges_monotonically() {
    use rand::Rng;
    let mut r = rng(5);
    let u = SpectralField::from_fn(1, 64, |_, j| {
        let w = 1.0 / (1.0 + j as f64);
        Complex64::new(r.random_range(-w..w), r.random_range(-w..w))
    });
    let errs: Vec<f64> = [4, 8, 16, 32, 64, 128]
        .iter()
        .map(|&n| u.add(&u.project_smooth(n, CutoffSymbol::Smooth).scale(-1.0)).unwrap().norm_sq())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    assert_eq!(*errs.last().unwrap(), 0.0);
}
