//! Fourier symbols of the noise mollifier and of the Galerkin cutoff.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Fourier symbol `φ(θ)` of an even smoothing kernel with `φ(0) = 1`.
///
/// `tail_bound(eps, k)` must bound `Σ_{|j|>k} φ²(εj)` from above; it drives
/// truncation of every lattice sum. Return `f64::INFINITY` when no bound is
/// available.
pub trait Symbol: Send + Sync {
    fn phi(&self, theta: f64) -> f64;
    fn tail_bound(&self, eps: f64, k: usize) -> f64;

    fn phi2(&self, theta: f64) -> f64 {
        let p = self.phi(theta);
        p * p
    }
}

/// The built-in mollifier symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierSymbol {
    /// `e^{−θ²}`.
    Gaussian,
    /// `cos²(πθ/2)` on `[−1, 1]`, zero outside.
    RaisedCosine,
    /// `φ ≡ 1`: no smoothing. Lattice sums diverge.
    Flat,
}

impl Symbol for MollifierSymbol {
    fn phi(&self, theta: f64) -> f64 {
        match self {
            MollifierSymbol::Gaussian => (-theta * theta).exp(),
            MollifierSymbol::RaisedCosine => {
                if theta.abs() >= 1.0 {
                    0.0
                } else {
                    let c = (0.5 * PI * theta).cos();
                    c * c
                }
            }
            MollifierSymbol::Flat => 1.0,
        }
    }

    fn tail_bound(&self, eps: f64, k: usize) -> f64 {
        let k1 = (k + 1) as f64;
        match self {
            MollifierSymbol::Gaussian => {
                // 2 Σ_{j≥0} e^{−2ε²(k+1+j)²} ≤ 2 e^{−2ε²(k+1)²} / (1 − e^{−4ε²(k+1)})
                let lead = (-2.0 * eps * eps * k1 * k1).exp();
                if lead == 0.0 {
                    return 0.0;
                }
                2.0 * lead / -(-4.0 * eps * eps * k1).exp_m1()
            }
            MollifierSymbol::RaisedCosine => {
                let last = (1.0 / eps).floor();
                if k1 > last {
                    0.0
                } else {
                    // φ² decreases on [0, 1]
                    2.0 * (last - k1 + 1.0) * self.phi2(eps * k1)
                }
            }
            MollifierSymbol::Flat => f64::INFINITY,
        }
    }
}

/// A user-supplied symbol with its own tail bound.
#[derive(Clone)]
pub struct CustomSymbol {
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tail: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl CustomSymbol {
    pub fn new(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tail: impl Fn(f64, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { phi: Arc::new(phi), tail: Arc::new(tail) }
    }
}

impl fmt::Debug for CustomSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomSymbol")
    }
}

impl Symbol for CustomSymbol {
    fn phi(&self, theta: f64) -> f64 {
        (self.phi)(theta)
    }

    fn tail_bound(&self, eps: f64, k: usize) -> f64 {
        (self.tail)(eps, k)
    }
}

/// A mollifier symbol evaluated at a fixed scale `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub kind: MollifierSymbol,
    pub eps: f64,
}

impl Mollifier {
    pub fn new(kind: MollifierSymbol, eps: f64) -> Self {
        Self { kind, eps }
    }

    /// `φ(εk)`.
    pub fn at(&self, k: i64) -> f64 {
        self.kind.phi(self.eps * k as f64)
    }

    /// `φ(εk)` for `k = 0..=kmax`.
    pub fn table(&self, kmax: usize) -> Vec<f64> {
        (0..=kmax).map(|k| self.at(k as i64)).collect()
    }
}

/// Even cutoff `ψ` supported in `[−1, 1]` used by the Galerkin projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffSymbol {
    /// 1 on `[0, 1/2]`, `cos²(π(θ − 1/2))` on `(1/2, 1]`, zero beyond.
    #[default]
    Smooth,
    /// Indicator of `[−1, 1]`.
    Sharp,
}

impl CutoffSymbol {
    pub fn psi(&self, theta: f64) -> f64 {
        let t = theta.abs();
        match self {
            CutoffSymbol::Smooth => {
                if t <= 0.5 {
                    1.0
                } else if t <= 1.0 {
                    let c = (PI * (t - 0.5)).cos();
                    c * c
                } else {
                    0.0
                }
            }
            CutoffSymbol::Sharp => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `ψ(k/N)` for `k = 0..=kmax`.
    pub fn table(&self, n: usize, kmax: usize) -> Vec<f64> {
        (0..=kmax).map(|k| self.psi(k as f64 / n as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_tail(s: &impl Symbol, eps: f64, k: usize) -> f64 {
        2.0 * ((k + 1)..200_000).map(|j| s.phi2(eps * j as f64)).sum::<f64>()
    }

    #[test]
    fn symbols_are_normalised_and_even() {
        for s in [MollifierSymbol::Gaussian, MollifierSymbol::RaisedCosine, MollifierSymbol::Flat] {
            assert_eq!(s.phi(0.0), 1.0);
            for t in [0.1, 0.5, 0.9, 1.7] {
                assert_eq!(s.phi(t), s.phi(-t));
                assert!(s.phi(t).abs() <= 1.0);
            }
        }
        assert_eq!(MollifierSymbol::RaisedCosine.phi(1.0), 0.0);
    }

    #[test]
    fn tail_bounds_dominate_the_tail() {
        for eps in [0.01, 0.1, 0.25, 1.0] {
            for k in [0usize, 1, 5, 20, 80] {
                for s in [MollifierSymbol::Gaussian, MollifierSymbol::RaisedCosine] {
                    let exact = brute_tail(&s, eps, k);
                    let bound = s.tail_bound(eps, k);
                    assert!(bound >= exact * (1.0 - 1e-12), "{s:?} eps={eps} k={k}: {bound} < {exact}");
                }
            }
        }
        assert!(MollifierSymbol::Flat.tail_bound(0.1, 100).is_infinite());
        assert_eq!(MollifierSymbol::RaisedCosine.tail_bound(0.5, 2), 0.0);
    }

    #[test]
    fn cutoff_shape() {
        let p = CutoffSymbol::Smooth;
        assert_eq!(p.psi(0.0), 1.0);
        assert_eq!(p.psi(0.5), 1.0);
        assert!((p.psi(0.75) - 0.5).abs() < 1e-15);
        assert!(p.psi(1.0) < 1e-30);
        assert_eq!(p.psi(1.2), 0.0);
        assert_eq!(p.psi(-0.7), p.psi(0.7));
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = p.psi(0.5 + 0.005 * i as f64);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        assert_eq!(CutoffSymbol::Sharp.psi(1.0), 1.0);
        assert_eq!(CutoffSymbol::Sharp.psi(1.01), 0.0);
    }
}
