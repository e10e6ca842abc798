//! TOML experiment configuration. Every block has defaults, so the
//! resolved config written into reports is complete even when the input
//! file only sets a few fields.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use decaylab::decay::{FitWindow, NormChoice, PipelineSettings};
use decaylab::dynamics::{Sampling, StepControl};
use decaylab::lemma::LemmaGrid;
use decaylab::nonlinear::DampingLaw;
use decaylab::{io, DampingProfileF64, Error, RateFunctionF64, SpectralOperatorF64, StatePairF64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Simulate,
    Gramian,
    VerifyForward,
    VerifyReverse,
    Lemma,
    Nonlinear,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] = [
        Pipeline::Simulate,
        Pipeline::Gramian,
        Pipeline::VerifyForward,
        Pipeline::VerifyReverse,
        Pipeline::Lemma,
        Pipeline::Nonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Simulate => "simulate",
            Pipeline::Gramian => "gramian",
            Pipeline::VerifyForward => "verify-forward",
            Pipeline::VerifyReverse => "verify-reverse",
            Pipeline::Lemma => "lemma",
            Pipeline::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Pipeline::ALL.iter().map(|p| p.name()).collect();
                format!("unknown pipeline {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub operator: OperatorConfig,
    pub damping: DampingProfileF64,
    pub rate: RateConfig,
    pub simulation: SimulationConfig,
    pub initial: InitialConfig,
    pub gramian: GramianConfig,
    pub reverse: ReverseConfig,
    pub lemma: LemmaConfig,
    pub nonlinear: NonlinearConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::Simulate,
            seed: 0,
            operator: OperatorConfig::default(),
            damping: DampingProfileF64::constant(1.0),
            rate: RateConfig::default(),
            simulation: SimulationConfig::default(),
            initial: InitialConfig::default(),
            gramian: GramianConfig::default(),
            reverse: ReverseConfig::default(),
            lemma: LemmaConfig::default(),
            nonlinear: NonlinearConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub n_modes: usize,
    pub length: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            n_modes: 16,
            length: 1.0,
        }
    }
}

/// `G` presets. `table_file` reads `x,G` rows relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Power { p: f64, r0: f64 },
    Exp { p: f64, r0: f64 },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
    TableFile { path: PathBuf },
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig::Power { p: 1.0, r0: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt: f64,
    pub sampling: Sampling,
    pub fit_t_min: f64,
    pub fit_t_max: Option<f64>,
    pub norm: NormChoice,
    /// Re-ingest a `t,energy,flux` trace instead of simulating.
    pub trace_in: Option<PathBuf>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_final: 50.0,
            dt: 0.01,
            sampling: Sampling::Stride { every: 10 },
            fit_t_min: 1.0,
            fit_t_max: None,
            norm: NormChoice::Vx,
            trace_in: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Seeded Gaussian probes with coefficients `N(0,1)/(k+1)^decay`.
    Probes { count: usize, decay: f64 },
    /// A single eigenmode in position or velocity.
    Mode { index: usize, slot: Slot, amplitude: f64 },
    Explicit { w0: Vec<f64>, w1: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Position,
    Velocity,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Probes { count: 4, decay: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramianConfig {
    /// Defaults to the simulation horizon.
    pub horizon: Option<f64>,
    pub weak_obs_samples: usize,
}

impl Default for GramianConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            weak_obs_samples: 1024,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReverseConfig {
    /// Estimated from the probes when absent.
    pub obs_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub c: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Check a supplied `t,H` CSV instead of the generated one.
    pub h_in: Option<PathBuf>,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        let g = LemmaGrid::<f64>::default();
        Self {
            c: 1.0,
            t_min: g.t_min,
            t_max: g.t_max,
            points: g.points,
            h_in: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearConfig {
    pub law: DampingLaw<f64>,
    pub rate_constant: f64,
    pub c0: f64,
    pub c_prime: f64,
    pub obs_constant: Option<f64>,
    pub proposition: Option<PropositionConfig>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            law: DampingLaw::Cubic { scale: 1.0 },
            rate_constant: 1.0,
            c0: 1.0,
            c_prime: 1.0,
            obs_constant: None,
            proposition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropositionConfig {
    pub h: f64,
    pub s0: f64,
    pub c: Option<f64>,
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: f64,
}

fn default_horizon_cap() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes file references relative to the config's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let RateConfig::TableFile { path } = &mut self.rate {
            fix(path);
        }
        if let Some(p) = &mut self.simulation.trace_in {
            fix(p);
        }
        if let Some(p) = &mut self.lemma.h_in {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.operator.n_modes == 0 {
            return Err(invalid("operator.n_modes must be at least 1"));
        }
        positive("operator.length", self.operator.length)?;
        self.damping.validate(self.operator.length)?;
        let sim = &self.simulation;
        positive("simulation.t_final", sim.t_final)?;
        positive("simulation.dt", sim.dt)?;
        if sim.dt > sim.t_final {
            return Err(invalid("simulation.dt must not exceed simulation.t_final"));
        }
        match sim.sampling {
            Sampling::Stride { every: 0 } => return Err(invalid("simulation.sampling.every must be at least 1")),
            Sampling::LogSpaced { per_decade: 0 } => {
                return Err(invalid("simulation.sampling.per_decade must be at least 1"))
            }
            _ => {}
        }
        positive("simulation.fit_t_min", sim.fit_t_min)?;
        if let Some(m) = sim.fit_t_max {
            if !(m > sim.fit_t_min) {
                return Err(invalid("simulation.fit_t_max must exceed fit_t_min"));
            }
        }
        match &self.initial {
            InitialConfig::Probes { count, decay } => {
                if *count == 0 {
                    return Err(invalid("initial.count must be at least 1"));
                }
                if !decay.is_finite() {
                    return Err(invalid("initial.decay must be finite"));
                }
            }
            InitialConfig::Mode { index, amplitude, .. } => {
                if *index >= self.operator.n_modes {
                    return Err(invalid(format!(
                        "initial.index {index} out of range for {} modes",
                        self.operator.n_modes
                    )));
                }
                if *amplitude == 0.0 || !amplitude.is_finite() {
                    return Err(invalid("initial.amplitude must be finite and nonzero"));
                }
            }
            InitialConfig::Explicit { w0, w1 } => {
                if w0.len() != self.operator.n_modes || w1.len() != self.operator.n_modes {
                    return Err(invalid("initial.w0 and initial.w1 must have n_modes entries"));
                }
            }
        }
        if let Some(h) = self.gramian.horizon {
            positive("gramian.horizon", h)?;
        }
        if let Some(c) = self.reverse.obs_constant {
            positive("reverse.obs_constant", c)?;
        }
        positive("lemma.c", self.lemma.c)?;
        positive("lemma.t_min", self.lemma.t_min)?;
        if !(self.lemma.t_max > self.lemma.t_min) || self.lemma.points < 2 {
            return Err(invalid("lemma grid needs t_max > t_min and at least 2 points"));
        }
        let nl = &self.nonlinear;
        positive("nonlinear.rate_constant", nl.rate_constant)?;
        positive("nonlinear.c0", nl.c0)?;
        positive("nonlinear.c_prime", nl.c_prime)?;
        if let Some(c) = nl.obs_constant {
            positive("nonlinear.obs_constant", c)?;
        }
        if let Some(p) = &nl.proposition {
            positive("nonlinear.proposition.h", p.h)?;
            positive("nonlinear.proposition.horizon_cap", p.horizon_cap)?;
            if !(p.s0 >= 0.0) {
                return Err(invalid("nonlinear.proposition.s0 must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn operator(&self) -> Result<SpectralOperatorF64, Error> {
        SpectralOperatorF64::dirichlet(self.operator.n_modes, self.operator.length)
    }

    pub fn rate(&self) -> Result<RateFunctionF64, Error> {
        match &self.rate {
            RateConfig::Power { p, r0 } => RateFunctionF64::power(*p, *r0),
            RateConfig::Exp { p, r0 } => RateFunctionF64::exp(*p, *r0),
            RateConfig::Tabulated { xs, ys } => RateFunctionF64::tabulated(xs.clone(), ys.clone()),
            RateConfig::TableFile { path } => io::read_rate_table(io::open(path)?),
        }
    }

    pub fn states(&self) -> Result<Vec<StatePairF64>, Error> {
        let n = self.operator.n_modes;
        let states = match &self.initial {
            InitialConfig::Probes { count, decay } => StatePairF64::seeded_probes(n, *count, *decay, self.seed),
            InitialConfig::Mode { index, slot, amplitude } => {
                let s = match slot {
                    Slot::Position => StatePairF64::position_mode(n, *index),
                    Slot::Velocity => StatePairF64::velocity_mode(n, *index),
                };
                vec![s.scaled(*amplitude)]
            }
            InitialConfig::Explicit { w0, w1 } => vec![StatePairF64::new(w0.clone(), w1.clone())?],
        };
        for s in &states {
            s.require_nonzero()?;
        }
        Ok(states)
    }

    pub fn window(&self) -> FitWindow<f64> {
        FitWindow {
            t_min: self.simulation.fit_t_min,
            t_max: self.simulation.fit_t_max,
        }
    }

    pub fn control(&self) -> StepControl<f64> {
        StepControl::new(self.simulation.t_final, self.simulation.dt).with_sampling(self.simulation.sampling)
    }

    pub fn settings(&self, norm_choice: NormChoice) -> PipelineSettings<f64> {
        PipelineSettings {
            t_sim: self.simulation.t_final,
            dt: self.simulation.dt,
            sampling: self.simulation.sampling,
            window: self.window(),
            norm_choice,
        }
    }

    pub fn lemma_grid(&self) -> LemmaGrid<f64> {
        LemmaGrid {
            t_min: self.lemma.t_min,
            t_max: self.lemma.t_max,
            points: self.lemma.points,
        }
    }
}
