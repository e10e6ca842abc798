//! One function per pipeline. Each writes its CSV artifacts into the
//! output directory and returns a verdict plus a JSON result block.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use decaylab::decay::{fit_profile, theorem1_forward, theorem1_reverse, DecayFit, NormChoice, Verdict};
use decaylab::dynamics::{solve_damped_linear_with, EnergyTrace};
use decaylab::lemma::{check_conclusion, check_hypothesis, lemma_end_to_end};
use decaylab::nonlinear::{nonlinear_decay_check, proposition_check, validate_damping, NonlinearDecaySettings, PropositionParams};
use decaylab::observability::{observed_flux, weak_obs_constant, Gramian};
use decaylab::scalar::lin_space;
use decaylab::{io, DampingMapF64, Error, SampledHF64};

use crate::config::{ExperimentConfig, Pipeline};

pub struct Outcome {
    pub verdict: Verdict,
    pub result: Value,
    pub artifacts: Vec<String>,
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, names: Vec::new() }
    }

    fn file(&mut self, name: &str) -> Result<std::io::BufWriter<std::fs::File>, Error> {
        self.names.push(name.to_string());
        io::create(self.dir.join(name))
    }

    fn trace(&mut self, name: &str, trace: &EnergyTrace<f64>) -> Result<(), Error> {
        io::write_trace_csv(trace, self.file(name)?)
    }

    fn plot(&mut self, fit: &DecayFit<f64>) -> Result<(), Error> {
        io::write_plot_csv(&fit.times, &fit.energies, &fit.bound, self.file("plot.csv")?)
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Pass only if every verdict passes; a failure outranks an unmet
/// hypothesis.
fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::Pass;
    for v in verdicts {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::HypothesisUnmet => out = Verdict::HypothesisUnmet,
            Verdict::Pass => {}
        }
    }
    out
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, Error> {
    let mut art = Artifacts::new(out_dir);
    let (verdict, result) = match cfg.pipeline {
        Pipeline::Simulate => simulate(cfg, &mut art)?,
        Pipeline::Gramian => gramian(cfg, &mut art)?,
        Pipeline::VerifyForward => verify_forward(cfg, &mut art)?,
        Pipeline::VerifyReverse => verify_reverse(cfg, &mut art)?,
        Pipeline::Lemma => lemma(cfg, &mut art)?,
        Pipeline::Nonlinear => nonlinear(cfg, &mut art)?,
    };
    Ok(Outcome {
        verdict,
        result,
        artifacts: art.names,
    })
}

const IDENTITY_TOL: f64 = 1e-10;

fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let op = cfg.operator()?;
    let g = cfg.rate()?;
    let init = &cfg.states()?[0];
    let (trace, source) = match &cfg.simulation.trace_in {
        Some(path) => {
            let trace = io::read_trace_csv(io::open(path)?, op.norms(init)?)?;
            trace.validate(IDENTITY_TOL)?;
            (trace, format!("re-ingested from {}", path.display()))
        }
        None => {
            let damp = DampingMapF64::build(&op, cfg.damping.clone())?;
            let (_, trace) = solve_damped_linear_with(&op, &damp, init, &cfg.control())?;
            art.trace("trace.csv", &trace)?;
            (trace, "simulated".to_string())
        }
    };
    let residual = trace.max_relative_identity_residual();
    let nonincreasing = trace.is_energy_nonincreasing(1e-14);
    let mut notes = Vec::new();
    let fit = match fit_profile(&trace, cfg.simulation.norm, cfg.window(), "G^-1(1/t)", |t| g.inverse(1.0 / t)) {
        Ok(fit) => {
            art.plot(&fit)?;
            Some(fit)
        }
        Err(e @ (Error::EmptyWindow(_) | Error::OutOfRange { .. })) => {
            notes.push(format!("no decay fit: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let verdict = if residual <= IDENTITY_TOL && nonincreasing {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok((
        verdict,
        json!({
            "source": source,
            "samples": trace.len(),
            "initial_norms": trace.initial_norms,
            "initial_energy": trace.initial_energy(),
            "final_energy": trace.energies.last(),
            "max_identity_residual": residual,
            "identity_tolerance": IDENTITY_TOL,
            "energy_nonincreasing": nonincreasing,
            "fit": fit,
            "notes": notes,
        }),
    ))
}

fn gramian(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let op = cfg.operator()?;
    let damp = DampingMapF64::build(&op, cfg.damping.clone())?;
    let horizon = cfg.gramian.horizon.unwrap_or(cfg.simulation.t_final);
    let gram = Gramian::assemble(&op, &damp, horizon)?;
    io::write_matrix_csv(&gram.q, art.file("gramian.csv")?)?;

    let states = cfg.states()?;
    let mut forms = Vec::with_capacity(states.len());
    for s in &states {
        let n = op.norms(s)?;
        let form = gram.form(s)?;
        forms.push(json!({ "form": form, "vx": n.vx, "ratio": form / n.vx }));
    }
    // Sanity curve: observed flux of the first state against the horizon.
    let times = lin_space(0.0, horizon, 101);
    let mut flux = Vec::with_capacity(times.len());
    for &t in &times {
        flux.push(if t > 0.0 { observed_flux(&op, &damp, &states[0], t)? } else { 0.0 });
    }
    io::write_pairs(["t", "observed_flux"], &times, &flux, art.file("flux.csv")?)?;
    let e0 = op.energy(&states[0])?;

    let g = cfg.rate()?;
    let weak = if g.is_increasing() {
        Some(weak_obs_constant(&op, &damp, horizon, &g, cfg.gramian.weak_obs_samples, cfg.seed)?)
    } else {
        None
    };
    let psd = gram.is_symmetric_psd();
    Ok((
        if psd { Verdict::Pass } else { Verdict::Fail },
        json!({
            "horizon": horizon,
            "dimension": gram.q.rows(),
            "min_eigenvalue": gram.min_eigenvalue(),
            "max_abs": gram.q.max_abs(),
            "symmetric_psd": psd,
            "first_state_energy": e0,
            "forms": forms,
            "weak_observability": weak.map(|w| json!({
                "empirical_constant": w.constant,
                "samples": w.samples,
                "seed": w.seed,
                "horizon": w.horizon,
                "minimizer": w.minimizer,
            })),
        }),
    ))
}

fn verify_forward(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let op = cfg.operator()?;
    let damp = DampingMapF64::build(&op, cfg.damping.clone())?;
    let g = cfg.rate()?;
    let settings = cfg.settings(NormChoice::Vx);
    let mut reports = Vec::new();
    for s in &cfg.states()? {
        reports.push(theorem1_forward(&op, &damp, &g, s, &settings)?);
    }
    art.plot(&reports[0].fit)?;
    let verdict = combine(reports.iter().map(|r| r.verdict));
    Ok((verdict, json!({ "probes": reports })))
}

fn verify_reverse(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let op = cfg.operator()?;
    let damp = DampingMapF64::build(&op, cfg.damping.clone())?;
    let g = cfg.rate()?;
    let states = cfg.states()?;
    let rep = theorem1_reverse(&op, &damp, &g, cfg.reverse.obs_constant, &states, &cfg.settings(NormChoice::DaV))?;
    if let Some(fit) = rep.fits.first() {
        art.plot(fit)?;
    }
    Ok((rep.verdict, to_value(&rep)))
}

fn lemma(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let g = cfg.rate()?;
    let f = g.make_f()?;
    let c = cfg.lemma.c;
    let (verdict, h, result) = match &cfg.lemma.h_in {
        Some(path) => {
            let h: SampledHF64 = io::read_sampled_h(io::open(path)?)?;
            let hyp = check_hypothesis(&h, &g, c)?;
            let verdict = if !hyp.holds {
                Verdict::HypothesisUnmet
            } else {
                Verdict::Pass
            };
            let concl = check_conclusion(&h, &f)?;
            let verdict = if verdict == Verdict::Pass && !concl.c_min.is_finite() {
                Verdict::Fail
            } else {
                verdict
            };
            let result = json!({
                "source": path.display().to_string(),
                "c": c,
                "hypothesis": hyp,
                "conclusion": concl,
            });
            (verdict, h, result)
        }
        None => {
            let rep = lemma_end_to_end(&g, c, cfg.lemma_grid())?;
            let ok = rep.hypothesis.holds && rep.conclusion.c_min.is_finite() && rep.psi_monotone.closes;
            let h = rep.h.clone();
            (if ok { Verdict::Pass } else { Verdict::Fail }, h, to_value(&rep))
        }
    };
    io::write_sampled_h(&h, art.file("h.csv")?)?;
    let c_min = result["conclusion"]["c_min"].as_f64().unwrap_or(f64::NAN);
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut bound = Vec::new();
    for (&t, &v) in h.times().iter().zip(h.values()) {
        if let Ok(b) = f.inverse(1.0 / t.sqrt()) {
            times.push(t);
            values.push(v);
            bound.push(c_min * b);
        }
    }
    io::write_plot_csv(&times, &values, &bound, art.file("plot.csv")?)?;
    Ok((verdict, result))
}

fn nonlinear(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(Verdict, Value), Error> {
    let op = cfg.operator()?;
    let g_base = cfg.rate()?;
    let law = validate_damping(&cfg.nonlinear.law)?;
    let init = &cfg.states()?[0];
    let nl = &cfg.nonlinear;
    let settings = NonlinearDecaySettings {
        t_sim: cfg.simulation.t_final,
        dt: cfg.simulation.dt,
        sampling: cfg.simulation.sampling,
        window: cfg.window(),
        rate_constant: nl.rate_constant,
        c0: nl.c0,
        c_prime: nl.c_prime,
        obs_constant: nl.obs_constant,
    };
    let rep = nonlinear_decay_check(&op, &cfg.damping, &law, init, &g_base, &settings)?;
    if let Some(fit) = &rep.fit {
        art.plot(fit)?;
    }
    let proposition = match &nl.proposition {
        Some(p) => Some(proposition_check(
            &op,
            &cfg.damping,
            &law,
            init,
            &g_base,
            PropositionParams {
                h: p.h,
                s0: p.s0,
                rate_constant: nl.rate_constant,
                c: p.c,
                dt: cfg.simulation.dt,
                horizon_cap: p.horizon_cap,
            },
        )?),
        None => None,
    };
    let mut verdict = rep.verdict;
    if let Some(Some(false)) = proposition.as_ref().map(|p| p.holds) {
        verdict = combine([verdict, Verdict::Fail]);
    }
    Ok((verdict, json!({ "decay": rep, "proposition": proposition })))
}
