//! Nonlinear damping laws `g`, their growth constants, the functionals
//! `E₁`, `X` and `Λ_r` of the initial data, and the decay pipeline for
//! `u_tt - u_xx + a(x) g(u_t) = 0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decay::{fit_scaled, DecayFit, FitWindow, Verdict};
use crate::dynamics::{solve_damped_nonlinear_with, NewtonStats, Sampling, StepControl};
use crate::error::{Error, Result};
use crate::lemma::SampledH;
use crate::observability::{observation_horizon, smallest_passing_constant, Gramian};
use crate::rate::{
    check_g_dilation_condition, check_xfinv_increasing, rate_exponents, GridCheck, RateExponents,
    RateFunction, RateSpec,
};
use crate::scalar::{log_space, Real};
use crate::spectral::{Collocation, DampingMap, DampingProfile, SpectralOperator, StatePair};

/// Configurable damping laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum DampingLaw<T> {
    /// `g(s) = scale · s`.
    Linear { scale: T },
    /// `g(s) = scale · s³`.
    Cubic { scale: T },
    /// `g(s) = scale · sign(s) |s|^exponent`.
    OddPower { exponent: T, scale: T },
    /// Piecewise-linear through `(s, g)` with linear extrapolation. A table
    /// whose abscissae are all nonnegative is extended as an odd function.
    #[serde(alias = "custom_table", alias = "custom-table")]
    Table { s: Vec<T>, g: Vec<T> },
}

type Scalar<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
enum Law<T> {
    Power { exponent: T, scale: T },
    Table { s: Vec<T>, g: Vec<T> },
    Closure { f: Scalar<T>, df: Option<Scalar<T>> },
}

impl<T: Real> Law<T> {
    fn from_spec(spec: &DampingLaw<T>) -> Result<Self> {
        let check_scale = |scale: T| {
            if scale > T::zero() && scale.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("damping scale must be positive, got {scale}")))
            }
        };
        Ok(match spec {
            DampingLaw::Linear { scale } => {
                check_scale(*scale)?;
                Law::Power {
                    exponent: T::one(),
                    scale: *scale,
                }
            }
            DampingLaw::Cubic { scale } => {
                check_scale(*scale)?;
                Law::Power {
                    exponent: T::lit(3.0),
                    scale: *scale,
                }
            }
            DampingLaw::OddPower { exponent, scale } => {
                check_scale(*scale)?;
                if !(*exponent > T::zero()) || !exponent.is_finite() {
                    return Err(Error::invalid("odd power exponent must be positive"));
                }
                Law::Power {
                    exponent: *exponent,
                    scale: *scale,
                }
            }
            DampingLaw::Table { s, g } => {
                if s.len() != g.len() || s.len() < 2 {
                    return Err(Error::invalid("damping table needs at least two (s, g) pairs"));
                }
                if s.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("damping table abscissae must be strictly increasing"));
                }
                let (s, g) = if s[0] >= T::zero() {
                    let mut fs: Vec<T> = s.iter().rev().filter(|&&x| x > T::zero()).map(|&x| -x).collect();
                    let mut fg: Vec<T> = s
                        .iter()
                        .zip(g)
                        .rev()
                        .filter(|(&x, _)| x > T::zero())
                        .map(|(_, &y)| -y)
                        .collect();
                    fs.extend(s.iter().copied());
                    fg.extend(g.iter().copied());
                    if s[0] > T::zero() {
                        return Err(Error::invalid("a one-sided damping table must start at s = 0"));
                    }
                    (fs, fg)
                } else {
                    (s.clone(), g.clone())
                };
                Law::Table { s, g }
            }
        })
    }

    fn eval(&self, x: T) -> T {
        match self {
            Law::Power { exponent, scale } => {
                if *exponent == T::one() {
                    *scale * x
                } else {
                    *scale * x.signum() * x.abs().powf(*exponent)
                }
            }
            Law::Table { s, g } => table_eval(s, g, x).0,
            Law::Closure { f, .. } => f(x),
        }
    }

    fn derivative(&self, x: T) -> T {
        match self {
            Law::Power { exponent, scale } => {
                let q = *exponent;
                if q == T::one() {
                    *scale
                } else {
                    let a = if q < T::one() {
                        x.abs().max(T::lit(1e-8))
                    } else {
                        x.abs()
                    };
                    *scale * q * a.powf(q - T::one())
                }
            }
            Law::Table { s, g } => table_eval(s, g, x).1,
            Law::Closure { f, df } => match df {
                Some(d) => d(x),
                None => {
                    let h = T::lit(1e-6) * x.abs().max(T::one());
                    (f(x + h) - f(x - h)) / (h + h)
                }
            }
            .max(T::zero()),
        }
    }
}

/// Value and slope of the piecewise-linear table at `x`.
fn table_eval<T: Real>(s: &[T], g: &[T], x: T) -> (T, T) {
    let n = s.len();
    let seg = match s.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let slope = (g[seg + 1] - g[seg]) / (s[seg + 1] - s[seg]);
    (g[seg] + slope * (x - s[seg]), slope)
}

/// Exponents and constants of the growth conditions
/// `c1|s|^r ≤ |g(s)| ≤ c2|s|^{1/r}` for `|s| ≤ 1` and
/// `c3|s|^k ≤ |g(s)| ≤ c4|s|^p` for `|s| > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GrowthConstants<T> {
    pub r: T,
    pub k: T,
    pub p: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
}

/// `(n-2)(1-k) ≤ 4r` and `(n-2)(p-1) ≤ 1` in space dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DimensionCondition<T> {
    pub dimension: usize,
    pub first_lhs: T,
    pub first_rhs: T,
    pub second_lhs: T,
    pub second_rhs: T,
    pub holds: bool,
}

impl<T: Real> DimensionCondition<T> {
    pub fn evaluate(dimension: usize, c: &GrowthConstants<T>) -> Self {
        let d = T::lit(dimension as f64) - T::lit(2.0);
        let first_lhs = d * (T::one() - c.k);
        let first_rhs = T::lit(4.0) * c.r;
        let second_lhs = d * (c.p - T::one());
        let second_rhs = T::one();
        Self {
            dimension,
            first_lhs,
            first_rhs,
            second_lhs,
            second_rhs,
            holds: first_lhs <= first_rhs && second_lhs <= second_rhs,
        }
    }
}

/// Validated monotone damping law with fitted growth constants.
#[derive(Clone)]
pub struct NonlinearDamping<T> {
    law: Law<T>,
    description: String,
    constants: GrowthConstants<T>,
    dimension_condition: DimensionCondition<T>,
}

impl<T: Real> fmt::Debug for NonlinearDamping<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearDamping")
            .field("description", &self.description)
            .field("constants", &self.constants)
            .finish()
    }
}

/// Serializable view of a validated law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DampingSummary<T> {
    pub description: String,
    pub constants: GrowthConstants<T>,
    pub dimension_condition: DimensionCondition<T>,
}

impl<T: Real> NonlinearDamping<T> {
    #[inline]
    pub fn eval(&self, s: T) -> T {
        self.law.eval(s)
    }

    /// `g'(s)`; central differences when a closure law has no derivative.
    #[inline]
    pub fn derivative(&self, s: T) -> T {
        self.law.derivative(s)
    }

    pub fn constants(&self) -> &GrowthConstants<T> {
        &self.constants
    }

    pub fn dimension_condition(&self) -> &DimensionCondition<T> {
        &self.dimension_condition
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn summary(&self) -> DampingSummary<T> {
        DampingSummary {
            description: self.description.clone(),
            constants: self.constants,
            dimension_condition: self.dimension_condition,
        }
    }

    /// Validates a closure law; `derivative` is optional.
    pub fn custom(
        label: impl Into<String>,
        g: impl Fn(T) -> T + Send + Sync + 'static,
        derivative: Option<Box<dyn Fn(T) -> T + Send + Sync>>,
    ) -> Result<Self> {
        let law = Law::Closure {
            f: Arc::new(g),
            df: derivative.map(Arc::from),
        };
        validate_law(law, format!("custom: {}", label.into()), &[])
    }
}

/// Inner and outer magnitude bands of the growth conditions.
pub const SMALL_BAND: (f64, f64) = (1e-6, 1.0);
pub const LARGE_BAND: (f64, f64) = (1.0, 1e3);
const BAND_POINTS: usize = 4096;
const CONSTANT_MARGIN: f64 = 1e-6;

/// Checks monotonicity, `g(0) = 0` and `s g(s) ≥ 0` on a symmetric grid,
/// then fits `(r, k, p)` from log-log slopes and `c1..c4` from grid
/// extrema over the two magnitude bands.
pub fn validate_damping<T: Real>(spec: &DampingLaw<T>) -> Result<NonlinearDamping<T>> {
    let law = Law::from_spec(spec)?;
    let extra: Vec<T> = match spec {
        DampingLaw::Table { s, .. } => s.iter().map(|x| x.abs()).filter(|&x| x > T::zero()).collect(),
        _ => Vec::new(),
    };
    let description = match spec {
        DampingLaw::Linear { scale } => format!("linear: g(s) = {scale} s"),
        DampingLaw::Cubic { scale } => format!("cubic: g(s) = {scale} s^3"),
        DampingLaw::OddPower { exponent, scale } => {
            format!("odd power: g(s) = {scale} sign(s)|s|^{exponent}")
        }
        DampingLaw::Table { s, .. } => format!("table: {} nodes", s.len()),
    };
    validate_law(law, description, &extra)
}

fn validate_law<T: Real>(law: Law<T>, description: String, extra: &[T]) -> Result<NonlinearDamping<T>> {
    let witness = |s: T, reason: &str| Error::InvalidDamping {
        witness: s.as_f64(),
        reason: reason.to_string(),
    };
    let g0 = law.eval(T::zero());
    if !(g0.abs() <= T::tol(1e-14)) {
        return Err(witness(T::zero(), "g(0) must vanish"));
    }
    let mut mags = log_space(T::lit(SMALL_BAND.0), T::lit(LARGE_BAND.1), 2 * BAND_POINTS);
    // The regime boundary |s| = 1 is where power-law ratios peak.
    mags.push(T::one());
    mags.extend(extra.iter().copied().filter(|&x| {
        x >= T::lit(SMALL_BAND.0) && x <= T::lit(LARGE_BAND.1)
    }));
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mags.dedup();
    let mut grid: Vec<T> = mags.iter().rev().map(|&x| -x).collect();
    grid.push(T::zero());
    grid.extend(mags.iter().copied());

    let values: Vec<T> = grid.iter().map(|&s| law.eval(s)).collect();
    for (&s, &v) in grid.iter().zip(&values) {
        if !v.is_finite() {
            return Err(witness(s, "g is not finite"));
        }
        if s * v < T::zero() {
            return Err(witness(s, "sign condition s g(s) >= 0 violated"));
        }
        if s != T::zero() && v == T::zero() {
            return Err(witness(s, "g vanishes away from zero"));
        }
    }
    for (w, v) in grid.windows(2).zip(values.windows(2)) {
        if !(v[1] > v[0]) {
            return Err(witness(w[1], "g is not strictly increasing"));
        }
    }

    let slope = |a: T, b: T| -> T {
        let (ga, gb) = (law.eval(a).abs(), law.eval(b).abs());
        (gb.ln() - ga.ln()) / (b.abs().ln() - a.abs().ln())
    };
    let snap = |x: T| {
        let r = x.round();
        if (x - r).abs() < T::lit(1e-6) {
            r
        } else {
            x
        }
    };
    let (s1, s2) = (T::lit(1e-6), T::lit(1e-5));
    let alphas = [snap(slope(s1, s2)), snap(slope(-s1, -s2))];
    let (l1, l2) = (T::lit(1e2), T::lit(1e3));
    let betas = [snap(slope(l1, l2)), snap(slope(-l1, -l2))];
    let mut r = T::one();
    for a in alphas {
        r = r.max(a).max(T::one() / a);
    }
    let beta_min = betas[0].min(betas[1]);
    let beta_max = betas[0].max(betas[1]);
    let k = beta_min.max(T::zero()).min(T::one());
    let p = beta_max.max(T::one());

    let (mut c1, mut c2) = (T::infinity(), T::zero());
    let (mut c3, mut c4) = (T::infinity(), T::zero());
    for (&s, &v) in grid.iter().zip(&values) {
        let a = s.abs();
        if a == T::zero() {
            continue;
        }
        let gv = v.abs();
        if a <= T::one() {
            c1 = c1.min(gv / a.powf(r));
            c2 = c2.max(gv / a.powf(T::one() / r));
        }
        if a >= T::one() {
            c3 = c3.min(gv / a.powf(k));
            c4 = c4.max(gv / a.powf(p));
        }
    }
    let lower = T::one() - T::lit(CONSTANT_MARGIN);
    let upper = T::one() + T::lit(CONSTANT_MARGIN);
    let constants = GrowthConstants {
        r,
        k,
        p,
        c1: c1 * lower,
        c2: c2 * upper,
        c3: c3 * lower,
        c4: c4 * upper,
    };
    for c in [constants.c1, constants.c2, constants.c3, constants.c4] {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(witness(T::one(), "growth constants are not positive and finite"));
        }
    }
    Ok(NonlinearDamping {
        law,
        description,
        dimension_condition: DimensionCondition::evaluate(1, &constants),
        constants,
    })
}

/// Reports of initial-data functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NonlinearInvariants<T> {
    pub e0: T,
    pub e1: T,
    /// `E0 + E1 + E1^{2p-1} + E1^{1+(r-k)/(r+1)}`.
    pub x_val: T,
    /// `((r-1) + X) / E0`.
    pub lambda_r: T,
}

impl<T: Real> NonlinearInvariants<T> {
    /// `(r-1) + X`, the normalization of the nonlinear decay bound.
    pub fn normalizer(&self, r: T) -> T {
        r - T::one() + self.x_val
    }
}

/// `E₁ = ‖acceleration‖²_X + ‖u₁‖²_V`, with the acceleration
/// `-A u₀ - P[a g(u₁)]` evaluated by collocation.
pub fn e1_functional<T: Real>(
    op: &SpectralOperator<T>,
    col: &Collocation<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
) -> T {
    let nodal = col.synthesize(&init.w1);
    let gv: Vec<T> = nodal.iter().map(|&s| g.eval(s)).collect();
    let damping = col.project(&gv);
    let lambda = op.eigenvalues();
    let mut acc = T::zero();
    let mut vel = T::zero();
    for k in 0..op.n_modes() {
        let a = -lambda[k] * init.w0[k] - damping[k];
        acc += a * a;
        vel += lambda[k] * init.w1[k] * init.w1[k];
    }
    acc + vel
}

pub fn compute_x<T: Real>(
    init: &StatePair<T>,
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
) -> Result<NonlinearInvariants<T>> {
    op.check_dims(init)?;
    let e0 = op.energy(init)?;
    if !(e0 > T::zero()) {
        return Err(Error::DegenerateInput("initial energy is zero".into()));
    }
    let col = Collocation::new(op, profile)?;
    let e1 = e1_functional(op, &col, g, init);
    let GrowthConstants { r, k, p, .. } = *g.constants();
    let one = T::one();
    let x_val = e0 + e1 + e1.powf(T::lit(2.0) * p - one) + e1.powf(one + (r - k) / (r + one));
    Ok(NonlinearInvariants {
        e0,
        e1,
        x_val,
        lambda_r: (r - one + x_val) / e0,
    })
}

/// Observability requirement for the nonlinear data: monotonicity of
/// `x F^{-1}(1/x)` and `‖x‖²_{V×X} ≤ C ∫₀^{T*} ∫ a |φ_t|²` with
/// `T* = 1/G(1/(2CΛ_r))` for the undamped `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObservabilityRequirement<T> {
    pub xfinv: GridCheck<T>,
    pub constant: T,
    pub lambda_r: T,
    pub horizon: T,
    pub integral: T,
    pub vx: T,
    /// `C · integral - vx`.
    pub margin: T,
    pub holds: bool,
}

pub fn check_observability_requirement<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    g_base: &RateFunction<T>,
    constant: T,
) -> Result<ObservabilityRequirement<T>> {
    init.require_nonzero()?;
    let xfinv = check_xfinv_increasing(g_base, &crate::decay::xfinv_grid())?;
    let inv = compute_x(init, op, profile, g)?;
    let damp = DampingMap::build(op, profile.clone())?;
    let horizon = observation_horizon(g_base, constant, inv.lambda_r)?;
    let integral = Gramian::assemble(op, &damp, horizon)?.form(init)?;
    let vx = op.norms(init)?.vx;
    let margin = constant * integral - vx;
    Ok(ObservabilityRequirement {
        holds: xfinv.holds && integral > T::zero() && margin >= -T::tol(1e-12) * vx,
        xfinv,
        constant,
        lambda_r: inv.lambda_r,
        horizon,
        integral,
        vx,
        margin,
    })
}

/// Smallest constant for which [`check_observability_requirement`]'s
/// inequality holds.
pub fn observability_requirement_constant<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    g_base: &RateFunction<T>,
) -> Result<T> {
    let inv = compute_x(init, op, profile, g)?;
    let lo = T::one() / (T::lit(2.0) * g_base.domain().1 * inv.lambda_r) * (T::one() + T::tol(1e-9));
    smallest_passing_constant(lo, |c| {
        let rep = check_observability_requirement(op, profile, g, init, g_base, c)?;
        Ok(rep.integral > T::zero() && rep.margin >= T::zero())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PropositionParams<T> {
    pub h: T,
    pub s0: T,
    /// Constant `C` of `G(h) = C h^{2r+1} F(h)^{4(r+1)}`.
    pub rate_constant: T,
    /// Constant `c` tested on the right-hand side, if any.
    pub c: Option<T>,
    pub dt: T,
    /// Longest flux window simulated; longer windows are truncated and
    /// flagged.
    pub horizon_cap: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PropositionReport<T> {
    pub params: PropositionParams<T>,
    pub invariants: NonlinearInvariants<T>,
    /// `1 / G(h)`.
    pub window: T,
    pub simulated_window: T,
    pub truncated: bool,
    pub energy_at_s0: T,
    /// `h ((r-1) + X)`.
    pub first_term: T,
    /// `∫_{s0}^{s0 + window} ∫ a g(u_t) u_t`.
    pub flux_term: T,
    /// Smallest `c` making the inequality hold at `(h, s0)`.
    pub c_required: T,
    /// `c (first + flux) - E(u(s0))` for the supplied `c`.
    pub margin: Option<T>,
    pub holds: Option<bool>,
}

/// Evaluates `E(u(s0)) ≤ c h((r-1)+X) + c ∫_{s0}^{s0+1/G(h)} ∫ a g(u_t) u_t`.
pub fn proposition_check<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    g_base: &RateFunction<T>,
    params: PropositionParams<T>,
) -> Result<PropositionReport<T>> {
    init.require_nonzero()?;
    if !(params.h > T::zero()) || params.s0 < T::zero() || !(params.horizon_cap > T::zero()) {
        return Err(Error::invalid("proposition check needs h > 0, s0 >= 0 and a positive horizon cap"));
    }
    let consts = *g.constants();
    let big_g = g_base.nonlinear_rate(params.rate_constant, consts.r)?;
    let invariants = compute_x(init, op, profile, g)?;
    let window = T::one() / big_g.eval(params.h)?;
    let truncated = !(window <= params.horizon_cap);
    let simulated_window = if truncated { params.horizon_cap } else { window };

    let (state, energy_at_s0) = if params.s0 > T::zero() {
        let ctl = StepControl::new(params.s0, params.dt.min(params.s0))
            .with_sampling(Sampling::LogSpaced { per_decade: 1 });
        let run = solve_damped_nonlinear_with(op, profile, g, init, &ctl)?;
        let last = run.trajectory.states.last().cloned().unwrap_or_else(|| init.clone());
        (last, *run.trace.energies.last().unwrap_or(&T::zero()))
    } else {
        (init.clone(), invariants.e0)
    };
    let ctl = StepControl::new(simulated_window, params.dt.min(simulated_window))
        .with_sampling(Sampling::LogSpaced { per_decade: 1 });
    let run = solve_damped_nonlinear_with(op, profile, g, &state, &ctl)?;
    let flux_term = *run.trace.flux.last().unwrap_or(&T::zero());
    let first_term = params.h * invariants.normalizer(consts.r);
    let rhs = first_term + flux_term;
    let c_required = if rhs > T::zero() { energy_at_s0 / rhs } else { T::infinity() };
    let margin = params.c.map(|c| c * rhs - energy_at_s0);
    Ok(PropositionReport {
        params,
        invariants,
        window,
        simulated_window,
        truncated,
        energy_at_s0,
        first_term,
        flux_term,
        c_required,
        holds: margin.map(|m| m >= -T::tol(1e-12) * energy_at_s0),
        margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NonlinearDecaySettings<T> {
    pub t_sim: T,
    pub dt: T,
    pub sampling: Sampling,
    pub window: FitWindow<T>,
    /// Constant `C` of `G(h) = C h^{2r+1} F(h)^{4(r+1)}`.
    pub rate_constant: T,
    pub c0: T,
    /// `c'` of the bound `C G^{-1}(c'/t)`; the recursion uses
    /// `c = c' c0 / (1 + c0)`.
    pub c_prime: T,
    /// Observability constant for the data requirement, if it should be
    /// checked.
    pub obs_constant: Option<T>,
}

/// Tallies of the case recursion replayed on the simulated `H`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionReplay {
    pub steps: usize,
    pub skipped: usize,
    /// Steps with `c0 s ≤ c / G(H(s))`.
    pub first_case: usize,
    pub first_case_failures: usize,
    pub second_case: usize,
    /// Failures of `H(s + 1/G(H(s))) ≤ c/(c+1) H(s)`.
    pub contraction_failures: usize,
    /// Failures of `H((1+c0)s) ≤ H(s + 1/G(H(s)))`.
    pub ordering_failures: usize,
    /// Failures of the concluded `H(s) ≤ G^{-1}(c(1+c0)/(c0 s))`.
    pub conclusion_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExponentFits<T> {
    pub exponents: RateExponents<T>,
    /// Fit against `t^{-1/quoted}`.
    pub quoted: DecayFit<T>,
    /// Fit against `t^{-1/composed}`.
    pub composed: DecayFit<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NonlinearDecayReport<T> {
    pub damping: DampingSummary<T>,
    pub c: T,
    pub dilation: Option<GridCheck<T>>,
    pub invariants: Option<NonlinearInvariants<T>>,
    pub observability: Option<ObservabilityRequirement<T>>,
    pub fit: Option<DecayFit<T>>,
    pub replay: Option<RecursionReplay>,
    pub exponent_fits: Option<ExponentFits<T>>,
    pub max_identity_residual: Option<T>,
    pub newton: Option<NewtonStats>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Simulates the nonlinear system and fits
/// `E(u(t)) ≤ C G^{-1}(c'/t) ((r-1) + X)` on the window, replaying the
/// case recursion on `H = E / ((r-1) + X)`.
pub fn nonlinear_decay_check<T: Real>(
    op: &SpectralOperator<T>,
    profile: &DampingProfile<T>,
    g: &NonlinearDamping<T>,
    init: &StatePair<T>,
    g_base: &RateFunction<T>,
    settings: &NonlinearDecaySettings<T>,
) -> Result<NonlinearDecayReport<T>> {
    init.require_nonzero()?;
    if !(settings.c0 > T::zero()) || !(settings.c_prime > T::zero()) {
        return Err(Error::invalid("c0 and c' must be positive"));
    }
    let consts = *g.constants();
    let c = settings.c_prime * settings.c0 / (T::one() + settings.c0);
    let mut rep = NonlinearDecayReport {
        damping: g.summary(),
        c,
        dilation: None,
        invariants: None,
        observability: None,
        fit: None,
        replay: None,
        exponent_fits: None,
        max_identity_residual: None,
        newton: None,
        verdict: Verdict::HypothesisUnmet,
        notes: Vec::new(),
    };
    if profile.is_identically_zero(op.length()) {
        rep.notes.push("damping profile vanishes identically: no decay mechanism".into());
        return Ok(rep);
    }
    let big_g = g_base.nonlinear_rate(settings.rate_constant, consts.r)?;
    let ceiling = big_g.domain().1;
    let dilation_grid: Vec<T> = log_space(ceiling * T::lit(1e-6), ceiling, 128)
        .into_iter()
        .map(|h| big_g.eval(h))
        .collect::<Result<_>>()?;
    let dilation = check_g_dilation_condition(&big_g, settings.c0, c, &dilation_grid)?;
    let dilation_ok = dilation.holds;
    rep.dilation = Some(dilation);
    if !dilation_ok {
        rep.notes.push("G fails the dilation condition for (c0, c)".into());
        return Ok(rep);
    }
    let inv = compute_x(init, op, profile, g)?;
    rep.invariants = Some(inv);
    if let Some(c_obs) = settings.obs_constant {
        let req = check_observability_requirement(op, profile, g, init, g_base, c_obs)?;
        let ok = req.holds;
        rep.observability = Some(req);
        if !ok {
            rep.notes.push("observability requirement fails for the initial data".into());
            return Ok(rep);
        }
    }

    let ctl = StepControl::new(settings.t_sim, settings.dt).with_sampling(settings.sampling);
    let run = solve_damped_nonlinear_with(op, profile, g, init, &ctl)?;
    rep.max_identity_residual = Some(run.trace.max_relative_identity_residual());
    rep.newton = Some(run.newton);
    let norm = inv.normalizer(consts.r);
    let fit = fit_scaled(&run.trace, "(r-1)+X", norm, settings.window, "G^-1(c'/t)", |t| {
        big_g.inverse(settings.c_prime / t)
    })?;

    let h = simulated_h(&run.trace.times, &run.trace.energies, norm)?;
    rep.replay = Some(replay_recursion(&h, &big_g, settings.c0, c, settings.window.t_min)?);

    if let RateSpec::Power { p, .. } = *g_base.spec() {
        let exponents = rate_exponents(p, consts.r);
        let quoted = fit_scaled(&run.trace, "(r-1)+X", norm, settings.window, "t^(-1/quoted)", |t| {
            Ok(t.powf(-T::one() / exponents.quoted))
        })?;
        let composed = fit_scaled(&run.trace, "(r-1)+X", norm, settings.window, "t^(-1/composed)", |t| {
            Ok(t.powf(-T::one() / exponents.composed))
        })?;
        rep.exponent_fits = Some(ExponentFits {
            exponents,
            quoted,
            composed,
        });
    }
    rep.verdict = if fit.no_decay || !fit.constant.is_finite() {
        rep.notes.push("energy does not decay at the tested rate on the window".into());
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    rep.fit = Some(fit);
    Ok(rep)
}

/// `H(s) = E(s) / norm` over the positive sample times, made monotone by a
/// running minimum and floored away from zero.
fn simulated_h<T: Real>(times: &[T], energies: &[T], norm: T) -> Result<SampledH<T>> {
    let mut ts = Vec::with_capacity(times.len());
    let mut hs: Vec<T> = Vec::with_capacity(times.len());
    for (&t, &e) in times.iter().zip(energies) {
        if !(t > T::zero()) {
            continue;
        }
        let mut v = (e / norm).min(T::one()).max(T::min_positive_value());
        if let Some(&last) = hs.last() {
            v = v.min(last);
        }
        ts.push(t);
        hs.push(v);
    }
    SampledH::new(ts, hs)
}

fn replay_recursion<T: Real>(
    h: &SampledH<T>,
    big_g: &RateFunction<T>,
    c0: T,
    c: T,
    t_min: T,
) -> Result<RecursionReplay> {
    let mut rep = RecursionReplay::default();
    let tol = T::one() + T::tol(1e-12);
    let one = T::one();
    for (&s, &hs) in h.times().iter().zip(h.values()) {
        if s < t_min || (one + c0) * s > h.t_max() {
            continue;
        }
        let gh = match big_g.eval(hs) {
            Ok(v) if v > T::zero() => v,
            _ => {
                rep.skipped += 1;
                continue;
            }
        };
        let Some((h_dil, _)) = h.eval((one + c0) * s) else {
            rep.skipped += 1;
            continue;
        };
        rep.steps += 1;
        if c0 * s <= c / gh {
            rep.first_case += 1;
            let bound = big_g.inverse(c / (c0 * s)).unwrap_or(T::infinity());
            if hs > bound * tol || h_dil > hs * tol {
                rep.first_case_failures += 1;
            }
        } else {
            rep.second_case += 1;
            let shifted = s + one / gh;
            if let Some((h_shift, _)) = h.eval(shifted) {
                if h_dil > h_shift * tol {
                    rep.ordering_failures += 1;
                }
                if h_shift > c / (c + one) * hs * tol {
                    rep.contraction_failures += 1;
                }
            }
        }
        if let Ok(bound) = big_g.inverse(c * (one + c0) / (c0 * s)) {
            if hs > bound * tol {
                rep.conclusion_failures += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    type DampingLaw = super::DampingLaw<f64>;
    type SpectralOperator = super::SpectralOperator<f64>;
    type StatePair = super::StatePair<f64>;
    type NonlinearDamping = super::NonlinearDamping<f64>;

    #[test]
    fn linear_law_constants() {
        let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
        let c = g.constants();
        assert_eq!((c.r, c.k, c.p), (1.0, 1.0, 1.0));
        for v in [c.c1, c.c2, c.c3, c.c4] {
            assert!((v - 1.0).abs() < 1e-5);
        }
        assert!(g.dimension_condition().holds);
    }

    #[test]
    fn cubic_law_exponents() {
        let g = validate_damping(&DampingLaw::Cubic { scale: 1.0 }).unwrap();
        let c = g.constants();
        assert_eq!(c.r, 3.0);
        assert_eq!(c.p, 3.0);
        assert_eq!(c.k, 1.0);
        assert_eq!(g.eval(-2.0), -8.0);
        assert_eq!(g.derivative(2.0), 12.0);
    }

    #[test]
    fn reversed_sign_is_rejected_with_witness() {
        let err = NonlinearDamping::custom("neg", |s: f64| -s, None).unwrap_err();
        match err {
            Error::InvalidDamping { reason, .. } => assert!(reason.contains("sign")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_is_rejected() {
        let err = NonlinearDamping::custom("wiggle", |s: f64| s + 0.9 * s.sin() * s.abs().min(1.0) * 3.0, None);
        assert!(matches!(err, Err(Error::InvalidDamping { .. })));
    }

    #[test]
    fn table_law_is_odd_extended() {
        let g = validate_damping(&DampingLaw::Table {
            s: vec![0.0, 1.0, 2.0],
            g: vec![0.0, 1.0, 3.0],
        })
        .unwrap();
        assert_eq!(g.eval(-1.5), -2.0);
        assert_eq!(g.derivative(1.5), 2.0);
        assert_eq!(g.eval(3.0), 5.0);
    }

    #[test]
    fn finite_difference_derivative() {
        let g = NonlinearDamping::custom("cubic", |s: f64| s * s * s + s, None).unwrap();
        assert!((g.derivative(0.5) - 1.75).abs() < 1e-8);
    }

    #[test]
    fn compute_x_for_single_undamped_mode() {
        let op = SpectralOperator::dirichlet(3, std::f64::consts::PI).unwrap();
        let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
        let init = StatePair::position_mode(3, 0);
        let inv = compute_x(&init, &op, &DampingProfile::constant(0.0), &g).unwrap();
        assert!((inv.e0 - 0.5).abs() < 1e-15);
        assert!((inv.e1 - 1.0).abs() < 1e-14);
        assert!((inv.x_val - 3.5).abs() < 1e-13);
        assert!((inv.lambda_r - 7.0).abs() < 1e-12);
    }
}
