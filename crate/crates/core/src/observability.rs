//! Observability Gramians of the undamped flow and the constants of the
//! horizon-limited observability inequalities.
//!
//! For the undamped solution `φ` with data `x = (w0, w1)`,
//! `∫₀^T ‖B*φ'(t)‖² dt = xᵀ Q(T) x`. The entries of `Q` are closed-form
//! time integrals of sine/cosine products weighted by the damping coupling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rate::RateFunction;
use crate::scalar::Real;
use crate::spectral::{DampingMap, SpectralOperator, StatePair};

/// Frequency gap below which the resonant limit formulas are used.
pub const RESONANCE_TOL: f64 = 1e-9;

pub const DEFAULT_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Gramian<T> {
    pub horizon: T,
    /// `2n × 2n` matrix over stacked `(w0, w1)` coordinates.
    pub q: Matrix<T>,
}

/// `∫₀^T cos(mt) dt`. Near resonance the Taylor expansion of the limit
/// is used.
fn int_cos<T: Real>(m: T, horizon: T) -> T {
    if m.abs() < T::lit(RESONANCE_TOL) {
        let x = m * horizon;
        horizon * (T::one() - x * x / T::lit(6.0))
    } else {
        (m * horizon).sin() / m
    }
}

/// `∫₀^T sin(mt) dt`.
fn int_sin<T: Real>(m: T, horizon: T) -> T {
    if m.abs() < T::lit(RESONANCE_TOL) {
        let x = m * horizon;
        T::lit(0.5) * x * horizon * (T::one() - x * x / T::lit(12.0))
    } else {
        let h = (m * horizon * T::lit(0.5)).sin();
        T::lit(2.0) * h * h / m
    }
}

/// Time integrals of `sin(a t) sin(b t)`, `cos(a t) cos(b t)` and
/// `sin(a t) cos(b t)` over `[0, T]`.
fn trig_products<T: Real>(a: T, b: T, horizon: T) -> (T, T, T) {
    let half = T::lit(0.5);
    let (d, s) = (a - b, a + b);
    let cd = int_cos(d, horizon);
    let cs = int_cos(s, horizon);
    (
        half * (cd - cs),
        half * (cd + cs),
        half * (int_sin(s, horizon) + int_sin(d, horizon)),
    )
}

impl<T: Real> Gramian<T> {
    pub fn assemble(op: &SpectralOperator<T>, damp: &DampingMap<T>, horizon: T) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::invalid(format!("Gramian horizon must be positive, got {horizon}")));
        }
        let n = op.n_modes();
        if damp.n_modes() != n {
            return Err(Error::invalid("damping map and operator disagree on n_modes"));
        }
        let om = op.frequencies();
        let m = damp.coupling();
        let mut q = Matrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            for k in j..n {
                let mjk = m[(j, k)];
                if mjk == T::zero() {
                    continue;
                }
                let (ss, cc, _) = trig_products(om[j], om[k], horizon);
                let q00 = om[j] * om[k] * mjk * ss;
                let q11 = mjk * cc;
                q[(j, k)] = q00;
                q[(k, j)] = q00;
                q[(n + j, n + k)] = q11;
                q[(n + k, n + j)] = q11;
            }
            for k in 0..n {
                let mjk = m[(j, k)];
                if mjk == T::zero() {
                    continue;
                }
                let (_, _, sc) = trig_products(om[j], om[k], horizon);
                let c = -om[j] * mjk * sc;
                q[(j, n + k)] = c;
                q[(n + k, j)] = c;
            }
        }
        Ok(Self { horizon, q })
    }

    /// `∫₀^T ‖B*φ'‖²` for the undamped flow started at `state`.
    pub fn form(&self, state: &StatePair<T>) -> Result<T> {
        if 2 * state.n_modes() != self.q.rows() {
            return Err(Error::invalid("state dimension does not match Gramian"));
        }
        Ok(self.q.quadratic_form(&state.stacked()))
    }

    pub fn min_eigenvalue(&self) -> T {
        self.q.symmetric_eigenvalues()[0]
    }

    /// Symmetric within `1e-12 ‖Q‖` and smallest eigenvalue at least
    /// `-1e-10 ‖Q‖`.
    pub fn is_symmetric_psd(&self) -> bool {
        let scale = self.q.max_abs().max(T::min_positive_value());
        self.q.asymmetry() <= T::tol(1e-12) * scale && self.min_eigenvalue() >= -T::tol(1e-10) * scale
    }
}

/// `∫₀^T ‖B*φ'‖²` for one state without forming the `2n × 2n` matrix.
pub fn observed_flux<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    state: &StatePair<T>,
    horizon: T,
) -> Result<T> {
    op.check_dims(state)?;
    Gramian::assemble(op, damp, horizon)?.form(state)
}

/// Estimate of the best constant `C` in
/// `∫₀^T ‖B*φ'‖² ≥ C ‖x‖²_{V×X} G(‖x‖²_weak / ‖x‖²_{V×X})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WeakObsEstimate<T> {
    /// Empirical constant: smallest ratio found, not a certified infimum.
    pub constant: T,
    pub minimizer: StatePair<T>,
    pub samples: usize,
    pub seed: u64,
    pub horizon: T,
}

/// Ratio `Gramian form / (vx · G(weak / vx))` for a nonzero state.
pub fn weak_obs_ratio<T: Real>(
    op: &SpectralOperator<T>,
    gram: &Gramian<T>,
    g: &RateFunction<T>,
    state: &StatePair<T>,
) -> Result<T> {
    state.require_nonzero()?;
    let norms = op.norms(state)?;
    let denom = norms.vx * g.eval(norms.weak / norms.vx)?;
    Ok(gram.form(state)? / denom)
}

/// Randomized search for the weak observability constant: Gaussian
/// samples plus every pure mode, followed by coordinate descent from the
/// best candidates. Deterministic for a given seed.
pub fn weak_obs_constant<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    horizon: T,
    g: &RateFunction<T>,
    n_samples: usize,
    seed: u64,
) -> Result<WeakObsEstimate<T>> {
    if !g.is_increasing() {
        return Err(Error::invalid("weak observability needs an increasing rate function"));
    }
    let n = op.n_modes();
    let gram = Gramian::assemble(op, damp, horizon)?;
    let ratio = |s: &StatePair<T>| weak_obs_ratio(op, &gram, g, s);

    let mut candidates: Vec<(T, StatePair<T>)> = Vec::with_capacity(n_samples + 2 * n);
    for k in 0..n {
        for s in [StatePair::position_mode(n, k), StatePair::velocity_mode(n, k)] {
            candidates.push((ratio(&s)?, s));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let s = StatePair::gaussian(n, 0.0, &mut rng);
        if s.is_zero() {
            continue;
        }
        candidates.push((ratio(&s)?, s));
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = candidates[0].clone();
    for (r0, s0) in candidates.into_iter().take(4) {
        let (r, s) = coordinate_descent(&ratio, r0, s0)?;
        if r < best.0 {
            best = (r, s);
        }
    }
    Ok(WeakObsEstimate {
        constant: best.0.max(T::zero()),
        minimizer: best.1,
        samples: n_samples,
        seed,
        horizon,
    })
}

fn coordinate_descent<T: Real>(
    ratio: &impl Fn(&StatePair<T>) -> Result<T>,
    mut value: T,
    state: StatePair<T>,
) -> Result<(T, StatePair<T>)> {
    let mut x = state.stacked();
    let scale = x.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut step = scale * T::lit(0.5);
    let floor = scale * T::lit(1e-6);
    let mut sweeps = 0;
    while step > floor && sweeps < 200 {
        sweeps += 1;
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [T::one(), -T::one()] {
                let old = x[i];
                x[i] = old + sign * step;
                let trial = StatePair::from_stacked(&x)?;
                if !trial.is_zero() {
                    let r = ratio(&trial)?;
                    if r < value {
                        value = r;
                        improved = true;
                        break;
                    }
                }
                x[i] = old;
            }
        }
        if !improved {
            step *= T::lit(0.5);
        }
    }
    Ok((value, StatePair::from_stacked(&x)?))
}

/// One probe of an observability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObsEntry<T> {
    pub index: usize,
    pub lambda: T,
    /// `T* = 1 / G(1 / (2CΛ))`.
    pub horizon: T,
    /// `∫₀^{T*} ‖B*φ'‖²`.
    pub integral: T,
    pub vx: T,
    /// `factor · integral - vx`.
    pub margin: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObsReport<T> {
    /// Constant in the horizon `1/G(1/(2CΛ))`.
    pub constant: T,
    /// Multiplier of the integral: 16 or the constant itself.
    pub factor: T,
    pub entries: Vec<ObsEntry<T>>,
    pub all_pass: bool,
}

/// `T* = 1 / G(1/(2CΛ))`.
pub fn observation_horizon<T: Real>(g: &RateFunction<T>, constant: T, lambda: T) -> Result<T> {
    let arg = T::one() / (T::lit(2.0) * constant * lambda);
    let gv = g.eval(arg)?;
    if !(gv > T::zero()) {
        return Err(Error::NumericFailure(format!("rate vanishes at {arg}")));
    }
    Ok(T::one() / gv)
}

fn verify_obs<T: Real>(
    states: &[StatePair<T>],
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
    constant: T,
    factor: T,
) -> Result<ObsReport<T>> {
    if !(constant > T::zero()) {
        return Err(Error::invalid("observability constant must be positive"));
    }
    let rounding = T::tol(1e-12);
    let mut entries = Vec::with_capacity(states.len());
    for (index, s) in states.iter().enumerate() {
        s.require_nonzero()?;
        let norms = op.norms(s)?;
        let lambda = norms.da_v / norms.vx;
        let horizon = observation_horizon(g, constant, lambda)
            .map_err(|e| e.with_context(format!("probe state {index}")))?;
        let integral = observed_flux(op, damp, s, horizon)?;
        let margin = factor * integral - norms.vx;
        entries.push(ObsEntry {
            index,
            lambda,
            horizon,
            integral,
            vx: norms.vx,
            margin,
            pass: margin >= -rounding * norms.vx && integral > T::zero(),
        });
    }
    Ok(ObsReport {
        constant,
        factor,
        all_pass: entries.iter().all(|e| e.pass),
        entries,
    })
}

/// `‖x‖²_{V×X} ≤ 16 ∫₀^{T*} ‖B*φ'‖²` with `T* = 1/G(1/(2CΛ))`.
pub fn verify_obs1<T: Real>(
    states: &[StatePair<T>],
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
    constant: T,
) -> Result<ObsReport<T>> {
    verify_obs(states, op, damp, g, constant, T::lit(16.0))
}

/// `‖x‖²_{V×X} ≤ C ∫₀^{T*} ‖B*φ'‖²` with `T* = 1/G(1/(2CΛ))`.
pub fn verify_obs2<T: Real>(
    states: &[StatePair<T>],
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
    constant: T,
) -> Result<ObsReport<T>> {
    verify_obs(states, op, damp, g, constant, constant)
}

/// Smallest `C` (to bisection accuracy) for which [`verify_obs2`] passes on
/// every probe. The margin is monotone in `C`, so the passing upper end of
/// the final bracket is returned.
pub fn empirical_obs2_constant<T: Real>(
    states: &[StatePair<T>],
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
) -> Result<T> {
    if states.is_empty() {
        return Err(Error::invalid("no probe states"));
    }
    let (_, ceiling) = g.domain();
    let mut lo = T::zero();
    for s in states {
        let n = op.norms(s)?;
        // Horizon argument 1/(2CΛ) must stay inside the rate's domain.
        lo = lo.max(T::one() / (T::lit(2.0) * ceiling * (n.da_v / n.vx)));
    }
    let lo = lo * (T::one() + T::tol(1e-9));
    smallest_passing_constant(lo, |c| Ok(verify_obs2(states, op, damp, g, c)?.all_pass))
}

/// Smallest constant `C > lo` (to bisection accuracy) for a predicate that
/// is monotone in `C`: doubling until it passes, then bisection in `ln C`.
/// Returns the passing end of the final bracket.
pub fn smallest_passing_constant<T: Real>(
    lo: T,
    passes: impl Fn(T) -> Result<bool>,
) -> Result<T> {
    let mut lo = lo.max(T::zero());
    let mut hi = lo.max(T::one());
    let mut tries = 0;
    while !passes(hi)? {
        lo = hi;
        hi *= T::lit(2.0);
        tries += 1;
        if tries > 80 {
            return Err(Error::HypothesisUnmet(
                "no observability constant found: damping does not observe the probes".into(),
            ));
        }
    }
    if lo > T::zero() && passes(lo)? {
        return Ok(lo);
    }
    for _ in 0..100 {
        let mid = if lo > T::zero() {
            (lo * hi).sqrt()
        } else {
            hi * T::lit(0.5)
        };
        if mid <= lo || mid >= hi || hi - lo <= T::tol(1e-12) * hi {
            break;
        }
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
