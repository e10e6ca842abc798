//! Time integration of the undamped, linearly damped and nonlinearly
//! damped systems.
//!
//! Damped flows use the implicit midpoint rule on `(w, w')`. Writing `y`
//! for the midpoint velocity, one step satisfies
//!
//! ```text
//! E(m+1) - E(m) = -dt · yᵀ (BB* y)          (linear)
//! E(m+1) - E(m) = -dt · ∫ a g(y(x)) y(x) dx  (nonlinear)
//! ```
//!
//! exactly in exact arithmetic, and the recorded flux accumulates exactly
//! those increments, so the energy identity holds to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::nonlinear::NonlinearDamping;
use crate::scalar::{max_abs, Real};
use crate::spectral::{Collocation, DampingMap, DampingProfile, GraphNorms, SpectralOperator, StatePair};

/// Energy samples with the cumulative damping flux `∫₀^t ‖B* w'‖² ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EnergyTrace<T> {
    pub times: Vec<T>,
    pub energies: Vec<T>,
    pub flux: Vec<T>,
    pub initial_norms: GraphNorms<T>,
}

impl<T: Real> EnergyTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_energy(&self) -> T {
        self.energies.first().copied().unwrap_or_else(T::zero)
    }

    /// `E(0) - E(t) - flux(t)` at every sample.
    pub fn identity_residuals(&self) -> Vec<T> {
        let e0 = self.initial_energy();
        self.energies
            .iter()
            .zip(&self.flux)
            .map(|(&e, &f)| e0 - e - f)
            .collect()
    }

    /// `max |E(0) - E(t) - flux(t)| / E(0)`; zero for a zero trace.
    pub fn max_relative_identity_residual(&self) -> T {
        let e0 = self.initial_energy();
        let worst = max_abs(&self.identity_residuals());
        if e0 > T::zero() {
            worst / e0
        } else {
            worst
        }
    }

    /// Energies nonincreasing up to `rel_tol · E(0)`.
    pub fn is_energy_nonincreasing(&self, rel_tol: T) -> bool {
        let slack = rel_tol * self.initial_energy();
        self.energies.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    /// Structural checks used when a trace is re-ingested from disk.
    pub fn validate(&self, identity_tol: T) -> Result<()> {
        let n = self.times.len();
        if self.energies.len() != n || self.flux.len() != n {
            return Err(Error::invalid("trace columns have different lengths"));
        }
        if n == 0 {
            return Err(Error::invalid("empty trace"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trace times must be strictly increasing"));
        }
        if self.flux[0] != T::zero() {
            return Err(Error::invalid("flux must start at zero"));
        }
        if self.energies.iter().chain(&self.flux).any(|&v| !(v >= T::zero())) {
            return Err(Error::invalid("energies and flux must be nonnegative"));
        }
        let slack = identity_tol * self.initial_energy();
        if self.flux.windows(2).any(|w| w[1] + slack < w[0]) {
            return Err(Error::invalid("flux must be nondecreasing"));
        }
        let r = self.max_relative_identity_residual();
        if r > identity_tol {
            return Err(Error::invalid(format!(
                "energy identity residual {} exceeds {}",
                r, identity_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<StatePair<T>>,
}

/// Which integration steps are stored. Integration itself always runs at
/// the fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Every `n`-th step plus the final one.
    Stride { every: usize },
    /// Roughly `per_decade` samples per decade of time, plus `t = 0` and
    /// the final time.
    LogSpaced { per_decade: usize },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Stride { every: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StepControl<T> {
    pub t_final: T,
    pub dt: T,
    pub sampling: Sampling,
}

impl<T: Real> StepControl<T> {
    pub fn new(t_final: T, dt: T) -> Self {
        Self {
            t_final,
            dt,
            sampling: Sampling::default(),
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final > T::zero()) || !self.t_final.is_finite() {
            return Err(Error::invalid(format!("final time must be positive, got {}", self.t_final)));
        }
        if !(self.dt > T::zero()) || self.dt > self.t_final {
            return Err(Error::invalid(format!(
                "time step must satisfy 0 < dt <= T, got dt = {}",
                self.dt
            )));
        }
        match self.sampling {
            Sampling::Stride { every: 0 } | Sampling::LogSpaced { per_decade: 0 } => {
                Err(Error::invalid("sampling density must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Number of steps and the effective step `T / n_steps`.
    fn grid(&self) -> (usize, T) {
        let ratio = self.t_final / self.dt;
        let rounded = ratio.round();
        let n = if (ratio - rounded).abs() <= T::tol(1e-9) * ratio {
            rounded
        } else {
            ratio.ceil()
        };
        let n = n.to_usize().unwrap_or(1).max(1);
        (n, self.t_final / T::lit(n as f64))
    }

    fn recorder(&self, n_steps: usize, dt: T) -> Recorder<T> {
        Recorder {
            sampling: self.sampling,
            n_steps,
            dt,
            next_log_target: dt,
            log_factor: match self.sampling {
                Sampling::LogSpaced { per_decade } => T::lit(10f64.powf(1.0 / per_decade as f64)),
                Sampling::Stride { .. } => T::one(),
            },
        }
    }
}

struct Recorder<T> {
    sampling: Sampling,
    n_steps: usize,
    dt: T,
    next_log_target: T,
    log_factor: T,
}

impl<T: Real> Recorder<T> {
    fn wants(&mut self, m: usize) -> bool {
        if m == 0 || m == self.n_steps {
            return true;
        }
        match self.sampling {
            Sampling::Stride { every } => m.is_multiple_of(every),
            Sampling::LogSpaced { .. } => {
                let t = self.dt * T::lit(m as f64);
                if t >= self.next_log_target {
                    while self.next_log_target <= t {
                        self.next_log_target *= self.log_factor;
                    }
                    true
                } else {
                    false
                }
            }
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Exact modal solution of `φ'' + Aφ = 0`:
/// `φ_k(t) = w0_k cos(ω_k t) + w1_k sin(ω_k t)/ω_k`.
pub fn solve_undamped<T: Real>(
    op: &SpectralOperator<T>,
    init: &StatePair<T>,
    times: &[T],
) -> Result<Trajectory<T>> {
    op.check_dims(init)?;
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("time grid must be nondecreasing"));
    }
    let states = times.iter().map(|&t| undamped_state(op, init, t)).collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

pub(crate) fn undamped_state<T: Real>(op: &SpectralOperator<T>, init: &StatePair<T>, t: T) -> StatePair<T> {
    let n = op.n_modes();
    let mut w0 = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    for (k, &om) in op.frequencies().iter().enumerate() {
        let (s, c) = (om * t).sin_cos();
        let (a, b) = (init.w0[k], init.w1[k]);
        w0.push(a * c + b * s / om);
        w1.push(-a * om * s + b * c);
    }
    StatePair { w0, w1 }
}

/// Implicit-midpoint solution of `w'' + Aw + BB*w' = 0` on `[0, T]`,
/// stored at every step.
pub fn solve_damped_linear<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    init: &StatePair<T>,
    t_final: T,
    dt: T,
) -> Result<(Trajectory<T>, EnergyTrace<T>)> {
    solve_damped_linear_with(op, damp, init, &StepControl::new(t_final, dt))
}

pub fn solve_damped_linear_with<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    init: &StatePair<T>,
    ctl: &StepControl<T>,
) -> Result<(Trajectory<T>, EnergyTrace<T>)> {
    op.check_dims(init)?;
    if damp.n_modes() != op.n_modes() {
        return Err(Error::invalid("damping map and operator disagree on mode count"));
    }
    ctl.validate()?;
    let (n_steps, dt) = ctl.grid();
    let stepper = LinearStepper::new(op, damp.coupling(), dt)?;
    let mut rec = ctl.recorder(n_steps, dt);

    let mut w = init.w0.clone();
    let mut v = init.w1.clone();
    let mut flux = CompensatedSum::default();
    let mut out = Recording::new(op, init)?;
    out.push(op, T::zero(), &w, &v, T::zero(), &mut rec, 0);

    let mut y = vec![T::zero(); op.n_modes()];
    for m in 1..=n_steps {
        stepper.midpoint_velocity(&w, &v, &mut y);
        flux.add(dt * damp.observed_norm_sq(&y));
        stepper.advance(&mut w, &mut v, &y);
        let t = ctl.t_final * T::lit(m as f64) / T::lit(n_steps as f64);
        out.push(op, t, &w, &v, flux.value(), &mut rec, m);
    }
    Ok(out.finish())
}

/// Solver for `(2I + dt²/2 Λ + dt M) y = 2v - dt Λ w`.
struct LinearStepper<T> {
    factor: Cholesky<T>,
    lambda: Vec<T>,
    dt: T,
}

impl<T: Real> LinearStepper<T> {
    fn new(op: &SpectralOperator<T>, coupling: &Matrix<T>, dt: T) -> Result<Self> {
        let diag: Vec<T> = op
            .eigenvalues()
            .iter()
            .map(|&l| T::lit(2.0) + dt * dt * T::lit(0.5) * l)
            .collect();
        let system = Matrix::from_diagonal(&diag).add(&coupling.scale(dt));
        let factor = Cholesky::factor(&system).map_err(|e| {
            Error::NumericFailure(format!("midpoint matrix is singular ({e}); damping must be PSD"))
        })?;
        Ok(Self {
            factor,
            lambda: op.eigenvalues().to_vec(),
            dt,
        })
    }

    fn midpoint_velocity(&self, w: &[T], v: &[T], y: &mut [T]) {
        for k in 0..y.len() {
            y[k] = T::lit(2.0) * v[k] - self.dt * self.lambda[k] * w[k];
        }
        self.factor.solve_in_place(y);
    }

    fn advance(&self, w: &mut [T], v: &mut [T], y: &[T]) {
        for k in 0..y.len() {
            w[k] += self.dt * y[k];
            v[k] = T::lit(2.0) * y[k] - v[k];
        }
    }
}

struct Recording<T> {
    times: Vec<T>,
    states: Vec<StatePair<T>>,
    energies: Vec<T>,
    flux: Vec<T>,
    norms: GraphNorms<T>,
}

impl<T: Real> Recording<T> {
    fn new(op: &SpectralOperator<T>, init: &StatePair<T>) -> Result<Self> {
        Ok(Self {
            times: Vec::new(),
            states: Vec::new(),
            energies: Vec::new(),
            flux: Vec::new(),
            norms: op.norms(init)?,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, op: &SpectralOperator<T>, t: T, w: &[T], v: &[T], flux: T, rec: &mut Recorder<T>, m: usize) {
        if rec.wants(m) {
            self.times.push(t);
            self.energies.push(op.energy_unchecked(w, v));
            self.flux.push(flux);
            self.states.push(StatePair {
                w0: w.to_vec(),
                w1: v.to_vec(),
            });
        }
    }

    fn finish(self) -> (Trajectory<T>, EnergyTrace<T>) {
        (
            Trajectory {
                times: self.times.clone(),
                states: self.states,
            },
            EnergyTrace {
                times: self.times,
                energies: self.energies,
                flux: self.flux,
                initial_norms: self.norms,
            },
        )
    }
}

/// Newton iteration bookkeeping for the nonlinear midpoint stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub line_search_halvings: usize,
}

impl NewtonStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.steps as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearRun<T> {
    pub trajectory: Trajectory<T>,
    pub trace: EnergyTrace<T>,
    pub newton: NewtonStats,
}

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 50;

/// Implicit-midpoint solution of `u_tt + A u + a(x) g(u_t) = 0`.
///
/// Each step solves the stage equation
/// `(2I + dt²/2 Λ) y + dt P[a g(y)] = 2v - dt Λ w` by damped Newton, where
/// `P` projects onto the modes through the profile-aligned collocation.
pub fn solve_damped_nonlinear<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    t_final: T,
    dt: T,
) -> Result<NonlinearRun<T>> {
    solve_damped_nonlinear_with(op, profile, g, init, &StepControl::new(t_final, dt))
}

pub fn solve_damped_nonlinear_with<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    ctl: &StepControl<T>,
) -> Result<NonlinearRun<T>> {
    op.check_dims(init)?;
    ctl.validate()?;
    let (n_steps, dt) = ctl.grid();
    let col = Collocation::new(op, profile)?;
    let mut rec = ctl.recorder(n_steps, dt);
    let n = op.n_modes();
    let lambda = op.eigenvalues();
    let diag: Vec<T> = lambda
        .iter()
        .map(|&l| T::lit(2.0) + dt * dt * T::lit(0.5) * l)
        .collect();

    let mut w = init.w0.clone();
    let mut v = init.w1.clone();
    let mut flux = CompensatedSum::default();
    let mut out = Recording::new(op, init)?;
    out.push(op, T::zero(), &w, &v, T::zero(), &mut rec, 0);

    let mut stats = NewtonStats {
        steps: 0,
        total_iterations: 0,
        max_iterations: 0,
        line_search_halvings: 0,
    };
    let mut y = v.clone();
    let mut y_prev = v.clone();
    let mut rhs = vec![T::zero(); n];
    let mut jac = Matrix::zeros(n, n);
    let tol = T::tol(NEWTON_TOL);

    for m in 1..=n_steps {
        for k in 0..n {
            rhs[k] = T::lit(2.0) * v[k] - dt * lambda[k] * w[k];
        }
        // Linear extrapolation of the midpoint velocity as the initial guess.
        let guess: Vec<T> = if m > 1 {
            y.iter().zip(&y_prev).map(|(&a, &b)| a + a - b).collect()
        } else {
            v.clone()
        };
        y_prev.clone_from(&y);
        let scale = max_abs(&rhs).max(T::one());
        let stage = StageProblem {
            col: &col,
            g,
            diag: &diag,
            rhs: &rhs,
            dt,
        };
        let (sol, iters, halvings) = stage.solve(guess, tol * scale, &mut jac).map_err(|e| match e {
            Error::NumericFailure(msg) => {
                Error::NumericFailure(format!("step {m} (t = {}): {msg}", dt * T::lit(m as f64)))
            }
            other => other,
        })?;
        y = sol;
        stats.steps += 1;
        stats.total_iterations += iters;
        stats.max_iterations = stats.max_iterations.max(iters);
        stats.line_search_halvings += halvings;

        let nodal = col.synthesize(&y);
        let dissipated: Vec<T> = nodal.iter().map(|&s| g.eval(s) * s).collect();
        flux.add(dt * col.integrate(&dissipated));
        for k in 0..n {
            w[k] += dt * y[k];
            v[k] = T::lit(2.0) * y[k] - v[k];
        }
        let t = ctl.t_final * T::lit(m as f64) / T::lit(n_steps as f64);
        out.push(op, t, &w, &v, flux.value(), &mut rec, m);
    }
    let (trajectory, trace) = out.finish();
    Ok(NonlinearRun {
        trajectory,
        trace,
        newton: stats,
    })
}

struct StageProblem<'a, T> {
    col: &'a Collocation<T>,
    g: &'a NonlinearDamping<T>,
    diag: &'a [T],
    rhs: &'a [T],
    dt: T,
}

impl<T: Real> StageProblem<'_, T> {
    fn residual(&self, y: &[T]) -> Vec<T> {
        let nodal = self.col.synthesize(y);
        let gv: Vec<T> = nodal.iter().map(|&s| self.g.eval(s)).collect();
        let proj = self.col.project(&gv);
        (0..y.len())
            .map(|k| self.diag[k] * y[k] + self.dt * proj[k] - self.rhs[k])
            .collect()
    }

    fn solve(&self, mut y: Vec<T>, tol: T, jac: &mut Matrix<T>) -> Result<(Vec<T>, usize, usize)> {
        let mut r = self.residual(&y);
        let mut rnorm = max_abs(&r);
        let mut halvings = 0;
        for iter in 0..=NEWTON_MAX_ITERS {
            if rnorm <= tol {
                return Ok((y, iter, halvings));
            }
            if iter == NEWTON_MAX_ITERS {
                break;
            }
            let nodal = self.col.synthesize(&y);
            let slopes: Vec<T> = nodal.iter().map(|&s| self.g.derivative(s)).collect();
            self.col.weighted_gram_into(&slopes, jac);
            for j in 0..y.len() {
                for k in 0..y.len() {
                    jac[(j, k)] *= self.dt;
                }
                jac[(j, j)] += self.diag[j];
            }
            let step = Cholesky::factor(jac)?.solve(&r);
            let mut alpha = T::one();
            loop {
                let trial: Vec<T> = y.iter().zip(&step).map(|(&a, &d)| a - alpha * d).collect();
                let rt = self.residual(&trial);
                let rtn = max_abs(&rt);
                if rtn < rnorm || rtn <= tol || alpha < T::lit(1.0 / 1024.0) {
                    y = trial;
                    r = rt;
                    rnorm = rtn;
                    break;
                }
                alpha *= T::lit(0.5);
                halvings += 1;
            }
        }
        Err(Error::NumericFailure(format!(
            "Newton did not converge in {NEWTON_MAX_ITERS} iterations (residual {} > {})",
            rnorm, tol
        )))
    }
}

/// Outcome of integrating the error system `v = φ - w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ErrorSystemReport<T> {
    pub times: Vec<T>,
    /// `E(v(t))`.
    pub energy_error: Vec<T>,
    /// `∫₀^t ‖B* v'‖²`.
    pub flux_error: Vec<T>,
    /// `∫₀^t ‖B* φ'‖²` along the undamped flow.
    pub flux_undamped: Vec<T>,
    /// `∫₀^t ‖B*φ'‖² - E(v(t)) - ∫₀^t ‖B*v'‖²` at every sample.
    pub margins: Vec<T>,
    pub worst_margin: T,
    /// Worst margin relative to `E(0)`.
    pub worst_relative_margin: T,
    /// Every margin is nonnegative within `rounding_tol · E(0)`.
    pub holds: bool,
    pub rounding_tol: T,
    /// `max_t |E(v) + ∫‖B*v'‖² - ∫⟨B*φ', B*v'⟩| / E(0)`: the identity
    /// obtained by testing the error equation with `v'`.
    pub cross_identity_residual: T,
    /// `max_t |E(w(t)) - E(φ(0)) + 2∫₀^t‖B*φ'‖²| / E(0)`, the literal
    /// two-trajectory formula sometimes quoted in place of the energy law.
    pub printed_formula_residual: T,
}

/// Integrates the damped flow `w` and the undamped flow `φ` with the same
/// midpoint scheme and checks `E(v) + ∫‖B*v'‖² ≤ ∫‖B*φ'‖²` for `v = φ - w`.
///
/// Both flows share the scheme, so `v` obeys the discrete error equation
/// exactly and the discrete inequality follows from Cauchy–Schwarz on the
/// midpoint samples.
pub fn error_system_check<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    init: &StatePair<T>,
    t_final: T,
    dt: T,
) -> Result<ErrorSystemReport<T>> {
    op.check_dims(init)?;
    let ctl = StepControl::new(t_final, dt);
    ctl.validate()?;
    let (n_steps, dt) = ctl.grid();
    let damped = LinearStepper::new(op, damp.coupling(), dt)?;
    let undamped = LinearStepper::new(op, &Matrix::zeros(op.n_modes(), op.n_modes()), dt)?;
    let n = op.n_modes();
    let e0 = op.energy(init)?;
    let rounding_tol = T::tol(1e-12);

    let (mut w, mut wv) = (init.w0.clone(), init.w1.clone());
    let (mut p, mut pv) = (init.w0.clone(), init.w1.clone());
    let (mut yw, mut yp) = (vec![T::zero(); n], vec![T::zero(); n]);
    let mut f_phi = CompensatedSum::default();
    let mut f_v = CompensatedSum::default();
    let mut f_cross = CompensatedSum::default();

    let mut rep = ErrorSystemReport {
        times: vec![T::zero()],
        energy_error: vec![T::zero()],
        flux_error: vec![T::zero()],
        flux_undamped: vec![T::zero()],
        margins: vec![T::zero()],
        worst_margin: T::zero(),
        worst_relative_margin: T::zero(),
        holds: true,
        rounding_tol,
        cross_identity_residual: T::zero(),
        printed_formula_residual: T::zero(),
    };
    let mut yv = vec![T::zero(); n];
    for m in 1..=n_steps {
        damped.midpoint_velocity(&w, &wv, &mut yw);
        undamped.midpoint_velocity(&p, &pv, &mut yp);
        for k in 0..n {
            yv[k] = yp[k] - yw[k];
        }
        f_phi.add(dt * damp.observed_norm_sq(&yp));
        f_v.add(dt * damp.observed_norm_sq(&yv));
        f_cross.add(dt * damp.coupling().bilinear_form(&yp, &yv));
        damped.advance(&mut w, &mut wv, &yw);
        undamped.advance(&mut p, &mut pv, &yp);

        let vpos: Vec<T> = p.iter().zip(&w).map(|(&a, &b)| a - b).collect();
        let vvel: Vec<T> = pv.iter().zip(&wv).map(|(&a, &b)| a - b).collect();
        let ev = op.energy_unchecked(&vpos, &vvel);
        let margin = f_phi.value() - ev - f_v.value();
        let cross = (ev + f_v.value() - f_cross.value()).abs();
        let printed = (op.energy_unchecked(&w, &wv) - e0 + T::lit(2.0) * f_phi.value()).abs();

        rep.times.push(ctl.t_final * T::lit(m as f64) / T::lit(n_steps as f64));
        rep.energy_error.push(ev);
        rep.flux_error.push(f_v.value());
        rep.flux_undamped.push(f_phi.value());
        rep.margins.push(margin);
        rep.worst_margin = rep.worst_margin.min(margin);
        rep.cross_identity_residual = rep.cross_identity_residual.max(cross);
        rep.printed_formula_residual = rep.printed_formula_residual.max(printed);
    }
    if e0 > T::zero() {
        rep.worst_relative_margin = rep.worst_margin / e0;
        rep.cross_identity_residual /= e0;
        rep.printed_formula_residual /= e0;
    }
    rep.holds = rep.worst_margin >= -rounding_tol * e0.max(T::min_positive_value());
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    type SpectralOperator = super::SpectralOperator<f64>;
    type DampingMap = super::DampingMap<f64>;
    type StepControl = super::StepControl<f64>;
    type StatePair = super::StatePair<f64>;
    use crate::spectral::DampingProfile;
    use std::f64::consts::PI;

    #[test]
    fn undamped_single_mode_is_periodic() {
        let op = SpectralOperator::dirichlet(6, 1.0).unwrap();
        let k = 3;
        let mut init = StatePair::position_mode(6, k);
        init.w1[k] = 0.4;
        let period = 2.0 * PI / op.frequencies()[k];
        let tr = solve_undamped(&op, &init, &[0.0, period]).unwrap();
        for (a, b) in tr.states[1].stacked().iter().zip(init.stacked()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn undamped_rejects_bad_grids() {
        let op = SpectralOperator::dirichlet(2, 1.0).unwrap();
        let init = StatePair::position_mode(2, 0);
        assert!(solve_undamped(&op, &init, &[]).is_err());
        assert!(solve_undamped(&op, &init, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn step_control_validation() {
        let op = SpectralOperator::dirichlet(2, 1.0).unwrap();
        let damp = DampingMap::build(&op, DampingProfile::constant(1.0)).unwrap();
        let init = StatePair::position_mode(2, 0);
        assert!(solve_damped_linear(&op, &damp, &init, 1.0, -0.1).is_err());
        assert!(solve_damped_linear(&op, &damp, &init, 1.0, 2.0).is_err());
        assert!(solve_damped_linear(&op, &damp, &init, 0.0, 0.1).is_err());
    }

    #[test]
    fn grid_lands_on_final_time() {
        let ctl = StepControl::new(1.0, 0.3);
        let (n, dt) = ctl.grid();
        assert_eq!(n, 4);
        assert!((dt - 0.25).abs() < 1e-15);
        let (n, _) = StepControl::new(20.0, 1e-3).grid();
        assert_eq!(n, 20_000);
    }

    #[test]
    fn log_sampling_keeps_endpoints_and_thins() {
        let op = SpectralOperator::dirichlet(2, 1.0).unwrap();
        let damp = DampingMap::build(&op, DampingProfile::constant(1.0)).unwrap();
        let init = StatePair::velocity_mode(2, 0);
        let ctl = StepControl::new(100.0, 0.01).with_sampling(Sampling::LogSpaced { per_decade: 10 });
        let (_, tr) = solve_damped_linear_with(&op, &damp, &init, &ctl).unwrap();
        assert_eq!(tr.times[0], 0.0);
        assert!((tr.times.last().unwrap() - 100.0).abs() < 1e-12);
        assert!(tr.len() > 30 && tr.len() < 60, "{} samples", tr.len());
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trace_validation_catches_corruption() {
        let op = SpectralOperator::dirichlet(3, 1.0).unwrap();
        let damp = DampingMap::build(&op, DampingProfile::constant(1.0)).unwrap();
        let init = StatePair::velocity_mode(3, 1);
        let (_, mut tr) = solve_damped_linear(&op, &damp, &init, 1.0, 0.01).unwrap();
        assert!(tr.validate(1e-10).is_ok());
        tr.flux[10] *= 2.0;
        assert!(tr.validate(1e-10).is_err());
    }
}
