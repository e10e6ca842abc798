//! Decay-constant fitting and the two directions of the decay /
//! observability equivalence for the linearly damped system.
//!
//! Forward: a fitted bound `E(t) ≤ C ‖x‖² G^{-1}(1/t)` implies
//! `‖x‖²_{V×X} ≤ 16 ∫₀^{T*} ‖B*φ'‖²` with `T* = 1/G(1/(2CΛ))`.
//! Reverse: the observability inequality with constant `C` plus
//! monotonicity of `x F^{-1}(1/x)` gives `E(t) ≤ C' ‖x‖²_{D(A)×V} F^{-1}(1/√t)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{solve_damped_linear_with, EnergyTrace, Sampling, StepControl};
use crate::error::{Error, Result};
use crate::observability::{
    empirical_obs2_constant, observation_horizon, observed_flux, verify_obs2, ObsReport,
};
use crate::rate::{check_xfinv_increasing, GridCheck, RateFunction, RateSpec};
use crate::scalar::{log_space, Real};
use crate::spectral::{DampingMap, GraphNorms, SpectralOperator, StatePair};

/// Which squared norm of the initial data multiplies the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    /// `‖(w0,w1)‖²_{V×X}`.
    Vx,
    /// `‖(w0,w1)‖²_{D(A)×V}`.
    DaV,
}

impl NormChoice {
    pub fn select<T: Real>(self, n: &GraphNorms<T>) -> T {
        match self {
            NormChoice::Vx => n.vx,
            NormChoice::DaV => n.da_v,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NormChoice::Vx => "vx",
            NormChoice::DaV => "da_v",
        }
    }
}

/// Closed time window; samples outside it are ignored by fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitWindow<T> {
    pub t_min: T,
    pub t_max: Option<T>,
}

impl<T: Real> FitWindow<T> {
    pub fn new(t_min: T, t_max: T) -> Self {
        Self {
            t_min,
            t_max: Some(t_max),
        }
    }

    pub fn contains(&self, t: T) -> bool {
        t >= self.t_min && self.t_max.is_none_or(|m| t <= m)
    }
}

impl<T: Real> Default for FitWindow<T> {
    /// `t ≥ 1`: the bounds are asymptotic and small times pollute constants.
    fn default() -> Self {
        Self {
            t_min: T::one(),
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecayFit<T> {
    /// Smallest `C` with `E(t) ≤ C · norm · profile(t)` on the window.
    pub constant: T,
    pub profile: String,
    /// Name of the normalization multiplying the profile.
    pub norm: String,
    pub norm_value: T,
    /// First and last retained sample times.
    pub t_window: [T; 2],
    pub times: Vec<T>,
    pub energies: Vec<T>,
    /// `C · norm · profile(t)`.
    pub bound: Vec<T>,
    /// `C · norm · profile(t) - E(t)`, nonnegative by construction.
    pub residuals: Vec<T>,
    pub argmax_time: T,
    /// The ratio peaks at the end of the window: the data do not decay at
    /// the tested rate there.
    pub no_decay: bool,
}

/// Fits `E(t) ≤ C · norm · profile(t)` on the window. Samples where the
/// profile is undefined (range errors) or nonpositive are skipped.
pub fn fit_profile<T: Real>(
    trace: &EnergyTrace<T>,
    norm_choice: NormChoice,
    window: FitWindow<T>,
    label: &str,
    profile: impl Fn(T) -> Result<T>,
) -> Result<DecayFit<T>> {
    let norm_value = norm_choice.select(&trace.initial_norms);
    fit_scaled(trace, norm_choice.label(), norm_value, window, label, profile)
}

/// As [`fit_profile`] with an arbitrary positive normalization.
pub fn fit_scaled<T: Real>(
    trace: &EnergyTrace<T>,
    norm: &str,
    norm_value: T,
    window: FitWindow<T>,
    label: &str,
    profile: impl Fn(T) -> Result<T>,
) -> Result<DecayFit<T>> {
    if !(norm_value > T::zero()) {
        return Err(Error::DegenerateInput("initial data is identically zero".into()));
    }
    let mut kept: Vec<(T, T, T)> = Vec::new();
    for (&t, &e) in trace.times.iter().zip(&trace.energies) {
        if !(t > T::zero()) || !window.contains(t) {
            continue;
        }
        match profile(t) {
            Ok(p) if p > T::zero() && p.is_finite() => kept.push((t, e, p)),
            Ok(_) | Err(Error::OutOfRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "no samples of the trace lie in the window for profile {label}"
        )));
    }
    let mut constant = T::zero();
    let mut arg = 0;
    for (i, &(_, e, p)) in kept.iter().enumerate() {
        let r = e / (norm_value * p);
        if r > constant || i == 0 {
            constant = r;
            arg = i;
        }
    }
    let bound: Vec<T> = kept.iter().map(|&(_, _, p)| constant * norm_value * p).collect();
    let residuals = kept
        .iter()
        .zip(&bound)
        .map(|(&(_, e, _), &b)| (b - e).max(T::zero()))
        .collect();
    Ok(DecayFit {
        constant,
        profile: label.to_string(),
        norm: norm.to_string(),
        norm_value,
        t_window: [kept[0].0, kept[kept.len() - 1].0],
        times: kept.iter().map(|k| k.0).collect(),
        energies: kept.iter().map(|k| k.1).collect(),
        bound,
        residuals,
        argmax_time: kept[arg].0,
        no_decay: kept.len() > 1 && arg == kept.len() - 1,
    })
}

/// Fit against `G^{-1}(1/t)` on the default window `t ≥ 1`.
pub fn fit_decay_constant<T: Real>(
    trace: &EnergyTrace<T>,
    g: &RateFunction<T>,
    norm_choice: NormChoice,
) -> Result<DecayFit<T>> {
    fit_decay_constant_in(trace, g, norm_choice, FitWindow::default())
}

pub fn fit_decay_constant_in<T: Real>(
    trace: &EnergyTrace<T>,
    g: &RateFunction<T>,
    norm_choice: NormChoice,
    window: FitWindow<T>,
) -> Result<DecayFit<T>> {
    fit_profile(trace, norm_choice, window, "G^-1(1/t)", |t| g.inverse(T::one() / t))
}

/// Fit against `F^{-1}(1/√t)` with `F = x G(x)²`.
pub fn fit_conclusion_constant<T: Real>(
    trace: &EnergyTrace<T>,
    g: &RateFunction<T>,
    norm_choice: NormChoice,
    window: FitWindow<T>,
) -> Result<DecayFit<T>> {
    let f = g.make_f()?;
    fit_profile(trace, norm_choice, window, "F^-1(1/sqrt(t))", |t| {
        f.inverse(T::one() / t.sqrt())
    })
}

/// Closed-form decay shape associated with a preset: `t^{-p}` for
/// `G = x^p`, `(ln t)^{-1/p}` for `G = exp(-x^{-p})/√x`.
pub fn fit_preset_shape<T: Real>(
    trace: &EnergyTrace<T>,
    g: &RateFunction<T>,
    norm_choice: NormChoice,
    window: FitWindow<T>,
) -> Result<Option<DecayFit<T>>> {
    match *g.spec() {
        RateSpec::Power { p, .. } => Ok(Some(fit_profile(trace, norm_choice, window, "t^-p", |t| {
            Ok(t.powf(-p))
        })?)),
        RateSpec::Exp { p, .. } => {
            let window = FitWindow {
                t_min: window.t_min.max(T::lit(1.0 + 1e-9)),
                ..window
            };
            Ok(Some(fit_profile(trace, norm_choice, window, "(ln t)^(-1/p)", |t| {
                Ok(t.ln().powf(-T::one() / p))
            })?))
        }
        _ => Ok(None),
    }
}

/// `Λ̃ = (E(w(0)) + E(w'(0))) / E(w(0))`, where `w'(0)` is the state
/// `(w1, -A w0 - BB* w1)` and its energy is
/// `½(‖-A w0 - BB* w1‖² + ‖A^{1/2} w1‖²)`.
pub fn lambda_tilde<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    init: &StatePair<T>,
) -> Result<T> {
    op.check_dims(init)?;
    init.require_nonzero()?;
    let e0 = op.energy(init)?;
    let accel: Vec<T> = {
        let bw = damp.apply(&init.w1);
        op.eigenvalues()
            .iter()
            .zip(&init.w0)
            .zip(bw)
            .map(|((&l, &w), b)| -l * w - b)
            .collect()
    };
    let e_dot = op.energy_unchecked(&init.w1, &accel);
    Ok((e0 + e_dot) / e0)
}

/// Outcome of a pipeline whose verdict may be undecidable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    HypothesisUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PipelineSettings<T> {
    pub t_sim: T,
    pub dt: T,
    pub sampling: Sampling,
    pub window: FitWindow<T>,
    pub norm_choice: NormChoice,
}

impl<T: Real> PipelineSettings<T> {
    fn control(&self) -> StepControl<T> {
        StepControl::new(self.t_sim, self.dt).with_sampling(self.sampling)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ForwardReport<T> {
    pub fit: DecayFit<T>,
    pub lambda: T,
    pub horizon: Option<T>,
    pub integral: Option<T>,
    pub vx: T,
    /// `16 · integral - vx`.
    pub margin: Option<T>,
    pub verdict: Verdict,
    pub max_identity_residual: T,
}

/// Simulates the damped system, fits the decay constant against
/// `G^{-1}(1/t)`, and checks the observability inequality with constant 16
/// at the horizon `1/G(1/(2CΛ))`.
pub fn theorem1_forward<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
    init: &StatePair<T>,
    settings: &PipelineSettings<T>,
) -> Result<ForwardReport<T>> {
    init.require_nonzero()?;
    let (_, trace) = solve_damped_linear_with(op, damp, init, &settings.control())?;
    let fit = fit_decay_constant_in(&trace, g, settings.norm_choice, settings.window)?;
    let norms = trace.initial_norms;
    let lambda = norms.da_v / norms.vx;
    let mut rep = ForwardReport {
        lambda,
        horizon: None,
        integral: None,
        vx: norms.vx,
        margin: None,
        verdict: Verdict::HypothesisUnmet,
        max_identity_residual: trace.max_relative_identity_residual(),
        fit,
    };
    if rep.fit.no_decay || !(rep.fit.constant > T::zero()) {
        return Ok(rep);
    }
    let horizon = observation_horizon(g, rep.fit.constant, lambda)?;
    let integral = observed_flux(op, damp, init, horizon)?;
    let margin = T::lit(16.0) * integral - norms.vx;
    rep.horizon = Some(horizon);
    rep.integral = Some(integral);
    rep.margin = Some(margin);
    rep.verdict = if margin >= -T::tol(1e-12) * norms.vx {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReverseReport<T> {
    pub xfinv: GridCheck<T>,
    /// Observability constant used, supplied or estimated.
    pub obs_constant: Option<T>,
    pub obs_constant_estimated: bool,
    pub obs: Option<ObsReport<T>>,
    /// Per-probe fits against `F^{-1}(1/√t)`.
    pub fits: Vec<DecayFit<T>>,
    /// Per-probe fits against the preset's closed-form shape.
    pub preset_fits: Vec<DecayFit<T>>,
    /// Maximum fitted constant over the probes.
    pub uniform_constant: Option<T>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Grid on which `x F^{-1}(1/x)` is tested before the reverse chain runs.
pub fn xfinv_grid<T: Real>() -> Vec<T> {
    log_space(T::lit(1e-3), T::lit(1e3), 256)
}

/// Checks the hypotheses (monotonicity of `x F^{-1}(1/x)` and the
/// observability inequality with constant `C_obs`), then fits each probe's
/// damped energy against `‖x‖² F^{-1}(1/√t)`. When `c_obs` is `None` the
/// smallest constant passing on the probes is estimated.
pub fn theorem1_reverse<T: Real>(
    op: &SpectralOperator<T>,
    damp: &DampingMap<T>,
    g: &RateFunction<T>,
    c_obs: Option<T>,
    states: &[StatePair<T>],
    settings: &PipelineSettings<T>,
) -> Result<ReverseReport<T>> {
    if states.is_empty() {
        return Err(Error::invalid("reverse chain needs at least one probe state"));
    }
    let xfinv = check_xfinv_increasing(g, &xfinv_grid())?;
    let mut rep = ReverseReport {
        xfinv,
        obs_constant: None,
        obs_constant_estimated: c_obs.is_none(),
        obs: None,
        fits: Vec::new(),
        preset_fits: Vec::new(),
        uniform_constant: None,
        verdict: Verdict::HypothesisUnmet,
        notes: Vec::new(),
    };
    if !rep.xfinv.holds {
        rep.notes.push("x F^-1(1/x) is not nondecreasing on the test grid".into());
        return Ok(rep);
    }
    let c = match c_obs {
        Some(c) => c,
        None => match empirical_obs2_constant(states, op, damp, g) {
            Ok(c) => c,
            Err(Error::HypothesisUnmet(msg)) => {
                rep.notes.push(msg);
                return Ok(rep);
            }
            Err(e) => return Err(e),
        },
    };
    rep.obs_constant = Some(c);
    let obs = verify_obs2(states, op, damp, g, c)?;
    let obs_ok = obs.all_pass;
    rep.obs = Some(obs);
    if !obs_ok {
        rep.notes.push("observability inequality fails for some probe".into());
        return Ok(rep);
    }
    let ctl = settings.control();
    for s in states {
        let (_, trace) = solve_damped_linear_with(op, damp, s, &ctl)?;
        rep.fits.push(fit_conclusion_constant(&trace, g, settings.norm_choice, settings.window)?);
        if let Some(f) = fit_preset_shape(&trace, g, settings.norm_choice, settings.window)? {
            rep.preset_fits.push(f);
        }
    }
    let uniform = rep.fits.iter().fold(T::zero(), |m, f| m.max(f.constant));
    rep.uniform_constant = Some(uniform);
    let finite = uniform.is_finite() && rep.fits.iter().all(|f| !f.no_decay);
    rep.verdict = if finite { Verdict::Pass } else { Verdict::Fail };
    if !finite {
        rep.notes.push("some probe does not decay at the concluded rate on the window".into());
    }
    Ok(rep)
}
