use super::{DampingProfile, SpectralOperator};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::quadrature::composite_gauss_legendre;
use crate::scalar::Real;

/// Gauss–Legendre nodes per panel. With panels no wider than `L/n` the
/// highest product frequency `2nπ/L` spans at most one period per panel,
/// where a 10-point rule is accurate far below double rounding.
const PANEL_ORDER: usize = 10;

/// Physical-space quadrature restricted to the support of `a(x)`.
///
/// Nodes are aligned with the profile's breakpoints so the indicator
/// discontinuities never fall inside a panel. Each node carries the
/// combined weight `w_q a(x_q)`; nodes with `a = 0` are dropped.
#[derive(Debug, Clone)]
pub struct Collocation<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    /// `basis[q * n + k] = e_k(x_q)`.
    basis: Vec<T>,
    n_modes: usize,
}

impl<T: Real> Collocation<T> {
    pub fn new(op: &SpectralOperator<T>, profile: &DampingProfile<T>) -> Result<Self> {
        let length = op.length();
        profile.validate(length)?;
        let n = op.n_modes();
        let max_panel = length / T::lit(n as f64);
        let bps = profile.breakpoints(length);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in bps.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = (a + b) * T::lit(0.5);
            let amp = profile.eval(length, mid);
            if amp == T::zero() {
                continue;
            }
            let panels = ((b - a) / max_panel).ceil().to_usize().unwrap_or(1).max(1);
            let (x, wq) = composite_gauss_legendre(a, b, panels, PANEL_ORDER);
            nodes.extend(x);
            weights.extend(wq.into_iter().map(|wi| wi * amp));
        }
        let mut basis = Vec::with_capacity(nodes.len() * n);
        for &x in &nodes {
            for k in 0..n {
                basis.push(op.eigenfunction(k, x));
            }
        }
        Ok(Self {
            nodes,
            weights,
            basis,
            n_modes: n,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// `w_q a(x_q)`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Nodal values `Σ_k c_k e_k(x_q)`.
    pub fn synthesize(&self, coeffs: &[T]) -> Vec<T> {
        let n = self.n_modes;
        (0..self.n_nodes())
            .map(|q| crate::scalar::dot(&self.basis[q * n..(q + 1) * n], coeffs))
            .collect()
    }

    /// `out_k = Σ_q w_q a(x_q) f_q e_k(x_q)`, the projection of `a f`.
    pub fn project(&self, values: &[T]) -> Vec<T> {
        let n = self.n_modes;
        let mut out = vec![T::zero(); n];
        for (q, (&w, &f)) in self.weights.iter().zip(values).enumerate() {
            let wf = w * f;
            for (o, &e) in out.iter_mut().zip(&self.basis[q * n..(q + 1) * n]) {
                *o += wf * e;
            }
        }
        out
    }

    /// `Σ_q w_q a(x_q) f_q`.
    pub fn integrate(&self, values: &[T]) -> T {
        crate::scalar::dot(&self.weights, values)
    }

    /// `G_jk = Σ_q w_q a(x_q) d_q e_j(x_q) e_k(x_q)`, written into `out`.
    pub fn weighted_gram_into(&self, diag: &[T], out: &mut Matrix<T>) {
        let n = self.n_modes;
        for j in 0..n {
            for k in 0..=j {
                out[(j, k)] = T::zero();
            }
        }
        for (q, (&w, &d)) in self.weights.iter().zip(diag).enumerate() {
            let wd = w * d;
            if wd == T::zero() {
                continue;
            }
            let row = &self.basis[q * n..(q + 1) * n];
            for j in 0..n {
                let s = wd * row[j];
                for k in 0..=j {
                    out[(j, k)] += s * row[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                out[(k, j)] = out[(j, k)];
            }
        }
    }

    pub fn weighted_gram(&self, diag: &[T]) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_modes, self.n_modes);
        self.weighted_gram_into(diag, &mut m);
        m
    }
}
