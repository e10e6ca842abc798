//! Operator `A = -d²/dx²` on `(0, L)` with Dirichlet conditions, held in
//! its own eigenbasis `e_k(x) = √(2/L) sin(kπx/L)`.
//!
//! Every state is a pair of coefficient vectors in that basis, so all the
//! graph norms reduce to eigenvalue-weighted sums.

mod collocation;
mod damping;

pub use collocation::Collocation;
pub use damping::{DampingMap, DampingProfile, Segment};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Diagonal representation of a self-adjoint, strictly positive operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralOperator<T> {
    eigenvalues: Vec<T>,
    frequencies: Vec<T>,
    length: T,
}

impl<T: Real> SpectralOperator<T> {
    /// Dirichlet Laplacian truncated to `n_modes` modes: `λ_k = (kπ/L)²`.
    pub fn dirichlet(n_modes: usize, length: T) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::invalid("n_modes must be positive"));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::invalid(format!(
                "domain length must be positive, got {}",
                length
            )));
        }
        let frequencies: Vec<T> = (1..=n_modes)
            .map(|k| T::lit(k as f64) * T::PI() / length)
            .collect();
        let eigenvalues = frequencies.iter().map(|&w| w * w).collect();
        Ok(Self {
            eigenvalues,
            frequencies,
            length,
        })
    }

    /// Arbitrary spectrum; eigenvalues must be positive and strictly
    /// increasing. The eigenfunctions are still taken to be the Dirichlet
    /// sines on `(0, length)`.
    pub fn from_eigenvalues(eigenvalues: Vec<T>, length: T) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("empty spectrum"));
        }
        if !(length > T::zero()) {
            return Err(Error::invalid("domain length must be positive"));
        }
        if eigenvalues[0] <= T::zero() {
            return Err(Error::invalid("eigenvalues must be strictly positive"));
        }
        if eigenvalues.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("eigenvalues must be strictly increasing"));
        }
        let frequencies = eigenvalues.iter().map(|l| l.sqrt()).collect();
        Ok(Self {
            eigenvalues,
            frequencies,
            length,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `√λ_k`, the angular frequencies of the undamped flow.
    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn smallest_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn largest_eigenvalue(&self) -> T {
        self.eigenvalues[self.n_modes() - 1]
    }

    /// Normalized eigenfunction `e_k(x)` for the 0-based mode index `k`.
    pub fn eigenfunction(&self, k: usize, x: T) -> T {
        let scale = (T::lit(2.0) / self.length).sqrt();
        scale * (T::lit((k + 1) as f64) * T::PI() * x / self.length).sin()
    }

    /// `e_k'(x)`.
    pub fn eigenfunction_derivative(&self, k: usize, x: T) -> T {
        let scale = (T::lit(2.0) / self.length).sqrt();
        let wave = T::lit((k + 1) as f64) * T::PI() / self.length;
        scale * wave * (wave * x).cos()
    }

    /// Evaluates `Σ c_k e_k(x)`.
    pub fn synthesize(&self, coeffs: &[T], x: T) -> T {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * self.eigenfunction(k, x))
            .sum()
    }

    pub(crate) fn check_dims(&self, state: &StatePair<T>) -> Result<()> {
        if state.w0.len() != self.n_modes() || state.w1.len() != self.n_modes() {
            return Err(Error::invalid(format!(
                "state has {}/{} coefficients, operator has {} modes",
                state.w0.len(),
                state.w1.len(),
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// `E = ½(‖w1‖² + ‖A^{1/2} w0‖²)`.
    pub fn energy(&self, state: &StatePair<T>) -> Result<T> {
        self.check_dims(state)?;
        Ok(self.energy_unchecked(&state.w0, &state.w1))
    }

    #[inline]
    pub(crate) fn energy_unchecked(&self, w0: &[T], w1: &[T]) -> T {
        let mut s = T::zero();
        for ((&l, &a), &b) in self.eigenvalues.iter().zip(w0).zip(w1) {
            s += l * a * a + b * b;
        }
        s * T::lit(0.5)
    }

    pub fn norms(&self, state: &StatePair<T>) -> Result<GraphNorms<T>> {
        self.check_dims(state)?;
        let mut n = GraphNorms {
            vx: T::zero(),
            da_v: T::zero(),
            weak: T::zero(),
        };
        for ((&l, &a), &b) in self.eigenvalues.iter().zip(&state.w0).zip(&state.w1) {
            let (a2, b2) = (a * a, b * b);
            n.vx += l * a2 + b2;
            n.da_v += l * l * a2 + l * b2;
            n.weak += a2 + b2 / l;
        }
        Ok(n)
    }

    /// `Λ = ‖(w0,w1)‖²_{D(A)×V} / ‖(w0,w1)‖²_{V×X}`.
    pub fn lambda_ratio(&self, state: &StatePair<T>) -> Result<T> {
        let n = self.norms(state)?;
        if n.vx == T::zero() {
            return Err(Error::DegenerateInput(
                "regularity quotient of the zero state".into(),
            ));
        }
        Ok(n.da_v / n.vx)
    }
}

/// Position and velocity coefficients in the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StatePair<T> {
    pub w0: Vec<T>,
    pub w1: Vec<T>,
}

impl<T: Real> StatePair<T> {
    pub fn new(w0: Vec<T>, w1: Vec<T>) -> Result<Self> {
        if w0.len() != w1.len() {
            return Err(Error::invalid(format!(
                "position has {} coefficients, velocity has {}",
                w0.len(),
                w1.len()
            )));
        }
        Ok(Self { w0, w1 })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w0: vec![T::zero(); n],
            w1: vec![T::zero(); n],
        }
    }

    /// `w0 = e_k`, `w1 = 0` (0-based `k`).
    pub fn position_mode(n: usize, k: usize) -> Self {
        let mut s = Self::zeros(n);
        s.w0[k] = T::one();
        s
    }

    /// `w0 = 0`, `w1 = e_k` (0-based `k`).
    pub fn velocity_mode(n: usize, k: usize) -> Self {
        let mut s = Self::zeros(n);
        s.w1[k] = T::one();
        s
    }

    pub fn n_modes(&self) -> usize {
        self.w0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.w0.iter().chain(&self.w1).all(|&c| c == T::zero())
    }

    /// Fails with a degenerate-input error for the zero state.
    pub fn require_nonzero(&self) -> Result<()> {
        if self.is_zero() {
            Err(Error::DegenerateInput("initial data is identically zero".into()))
        } else {
            Ok(())
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            w0: self.w0.iter().map(|&x| x * c).collect(),
            w1: self.w1.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            w0: self.w0.iter().zip(&other.w0).map(|(&a, &b)| a - b).collect(),
            w1: self.w1.iter().zip(&other.w1).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Stacked `(w0, w1)` coordinates.
    pub fn stacked(&self) -> Vec<T> {
        self.w0.iter().chain(&self.w1).copied().collect()
    }

    /// Gaussian coefficients `N(0,1) / k^decay` in both slots (`k` 1-based).
    pub fn gaussian<R: Rng + ?Sized>(n: usize, decay: f64, rng: &mut R) -> Self {
        let mut draw = |k: usize| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z / ((k + 1) as f64).powf(decay))
        };
        let w0 = (0..n).map(&mut draw).collect();
        let w1 = (0..n).map(&mut draw).collect();
        Self { w0, w1 }
    }

    /// `count` Gaussian states from a ChaCha stream seeded with `seed`.
    pub fn seeded_probes(n: usize, count: usize, decay: f64, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| Self::gaussian(n, decay, &mut rng)).collect()
    }

    pub fn from_stacked(x: &[T]) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::invalid("stacked state must have even length"));
        }
        let n = x.len() / 2;
        Ok(Self {
            w0: x[..n].to_vec(),
            w1: x[n..].to_vec(),
        })
    }
}

/// Squared graph norms of a state. Computed on demand, never stored with
/// the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GraphNorms<T> {
    /// `‖(w0,w1)‖²_{V×X} = Σ λ_k w0_k² + Σ w1_k²`.
    pub vx: T,
    /// `‖(w0,w1)‖²_{D(A)×V} = Σ λ_k² w0_k² + Σ λ_k w1_k²`.
    pub da_v: T,
    /// `‖(w0,w1)‖²_{X×D(A^{1/2})'} = Σ w0_k² + Σ w1_k²/λ_k`.
    pub weak: T,
}
