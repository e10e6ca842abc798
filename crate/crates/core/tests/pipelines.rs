use decaylab::decay::{
    fit_decay_constant, lambda_tilde, theorem1_forward, theorem1_reverse, FitWindow, NormChoice, PipelineSettings,
    Verdict,
};
use decaylab::dynamics::{solve_damped_linear, Sampling};
use decaylab::lemma::{lemma_end_to_end, LemmaGrid};
use decaylab::nonlinear::{
    compute_x, nonlinear_decay_check, proposition_check, validate_damping, DampingLaw, NonlinearDecaySettings,
    PropositionParams,
};
use decaylab::observability::{verify_obs1, verify_obs2, weak_obs_constant, Gramian};
use decaylab::{DampingMapF64, DampingProfileF64, Error, RateFunctionF64, SpectralOperatorF64, StatePairF64};

fn settings(t_sim: f64, norm_choice: NormChoice) -> PipelineSettings<f64> {
    PipelineSettings {
        t_sim,
        dt: 0.01,
        sampling: Sampling::Stride { every: 10 },
        window: FitWindow::new(1.0, t_sim),
        norm_choice,
    }
}

fn setup(profile: DampingProfileF64) -> (SpectralOperatorF64, DampingMapF64) {
    let op = SpectralOperatorF64::dirichlet(12, 1.0).unwrap();
    let damp = DampingMapF64::build(&op, profile).unwrap();
    (op, damp)
}

#[test]
fn single_mode_gramian_closed_form() {
    let (op, damp) = setup(DampingProfileF64::constant(1.0));
    let t = 3.3;
    let gram = Gramian::assemble(&op, &damp, t).unwrap();
    for k in 0..12 {
        let (lam, om) = (op.eigenvalues()[k], op.frequencies()[k]);
        let want = lam * (t / 2.0 - (2.0 * om * t).sin() / (4.0 * om));
        let got = gram.form(&StatePairF64::position_mode(12, k)).unwrap();
        assert!((got - want).abs() <= 1e-12 * want, "mode {k}");
    }
}

#[test]
fn weak_obs_constant_positive_under_full_damping_zero_without() {
    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let (op, full) = setup(DampingProfileF64::constant(1.0));
    let est = weak_obs_constant(&op, &full, 20.0, &g, 128, 1).unwrap();
    assert!(est.constant > 0.0);
    let again = weak_obs_constant(&op, &full, 20.0, &g, 128, 1).unwrap();
    assert_eq!(est, again);
    let none = DampingMapF64::build(&op, DampingProfileF64::constant(0.0)).unwrap();
    assert_eq!(weak_obs_constant(&op, &none, 20.0, &g, 16, 1).unwrap().constant, 0.0);
}

#[test]
fn observability_checks_fail_without_damping() {
    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let (op, none) = setup(DampingProfileF64::constant(0.0));
    let states = StatePairF64::seeded_probes(12, 3, 1.0, 2);
    let r1 = verify_obs1(&states, &op, &none, &g, 1.0).unwrap();
    let r2 = verify_obs2(&states, &op, &none, &g, 1.0).unwrap();
    assert!(!r1.all_pass && r1.entries.iter().all(|e| !e.pass));
    assert!(!r2.all_pass && r2.entries.iter().all(|e| !e.pass));
    assert_eq!(r1.factor, 16.0);
}

#[test]
fn small_lambda_gives_long_horizon_and_passes() {
    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let (op, damp) = setup(DampingProfileF64::interval(0.3, 0.7, 1.0));
    let s = StatePairF64::position_mode(12, 0);
    let rep = verify_obs1(&[s], &op, &damp, &g, 1.0).unwrap();
    assert!(rep.entries[0].horizon > 1.0);
    assert!(rep.all_pass, "{:?}", rep.entries[0]);
}

#[test]
fn forward_chain_partial_damping_low_mode() {
    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let (op, damp) = setup(DampingProfileF64::interval(0.3, 0.7, 1.0));
    let s = StatePairF64::position_mode(12, 0);
    let rep = theorem1_forward(&op, &damp, &g, &s, &settings(40.0, NormChoice::Vx)).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert!(rep.margin.unwrap() >= 0.0);
    assert!(rep.max_identity_residual <= 1e-10);
}

#[test]
fn forward_chain_without_damping_is_hypothesis_unmet() {
    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let (op, none) = setup(DampingProfileF64::constant(0.0));
    let s = StatePairF64::position_mode(12, 1);
    let rep = theorem1_forward(&op, &none, &g, &s, &settings(20.0, NormChoice::Vx)).unwrap();
    assert_eq!(rep.verdict, Verdict::HypothesisUnmet);
    assert!(rep.fit.no_decay);
}

#[test]
fn reverse_chain_reports_preset_shapes() {
    let (op, damp) = setup(DampingProfileF64::constant(1.0));
    let states = StatePairF64::seeded_probes(12, 3, 2.0, 5);
    for g in [RateFunctionF64::power(1.0, 1e3).unwrap(), RateFunctionF64::exp(1.0, 1.0).unwrap()] {
        let rep = theorem1_reverse(&op, &damp, &g, None, &states, &settings(60.0, NormChoice::DaV)).unwrap();
        assert!(rep.xfinv.holds);
        assert!(rep.obs_constant_estimated);
        assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.notes);
        assert_eq!(rep.fits.len(), 3);
        assert_eq!(rep.preset_fits.len(), 3);
        assert!(rep.uniform_constant.unwrap().is_finite());
    }
}

#[test]
fn lambda_tilde_bounds() {
    let (op, none) = setup(DampingProfileF64::constant(0.0));
    for s in StatePairF64::seeded_probes(12, 20, 1.0, 6) {
        let lt = lambda_tilde(&op, &none, &s).unwrap();
        assert!(lt >= 1.0);
        assert!(op.lambda_ratio(&s).unwrap() <= lt * (1.0 + 1e-12));
    }
    assert!(matches!(
        lambda_tilde(&op, &none, &StatePairF64::zeros(12)),
        Err(Error::DegenerateInput(_))
    ));
}

#[test]
fn partially_damped_fit_records_window() {
    let g = RateFunctionF64::power(0.5, 1e3).unwrap();
    let (op, damp) = setup(DampingProfileF64::interval(0.3, 0.7, 1.0));
    let s = &StatePairF64::seeded_probes(12, 1, 1.0, 3)[0];
    let (_, tr) = solve_damped_linear(&op, &damp, s, 30.0, 0.01).unwrap();
    let fit = fit_decay_constant(&tr, &g, NormChoice::Vx).unwrap();
    assert!(fit.constant.is_finite() && fit.constant > 0.0);
    assert!(fit.t_window[0] >= 1.0 && fit.t_window[1] <= 30.0);
    assert!(fit.residuals.iter().all(|&r| r >= 0.0));
    assert_eq!(fit.norm, "vx");
}

#[test]
fn lemma_rejects_rate_without_monotone_xfinv() {
    // x^p with p in (-1/2, 0): F = x^{1+2p} and x F^{-1}(1/x) = x^{1-1/(1+2p)} decreases.
    let g = RateFunctionF64::custom("x^-1/4", |x: f64| x.powf(-0.25), 1e-6, 1e3).unwrap();
    assert!(matches!(
        lemma_end_to_end(&g, 1.0, LemmaGrid::default()),
        Err(Error::HypothesisUnmet(_))
    ));
}

#[test]
fn compute_x_hand_example() {
    let op = SpectralOperatorF64::dirichlet(4, std::f64::consts::PI).unwrap();
    let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
    let init = StatePairF64::position_mode(4, 0);
    let inv = compute_x(&init, &op, &DampingProfileF64::constant(0.0), &g).unwrap();
    assert!((inv.e0 - 0.5).abs() < 1e-14);
    assert!((inv.e1 - 1.0).abs() < 1e-14);
    assert!((inv.x_val - 3.5).abs() < 1e-13);
}

#[test]
fn compute_x_scales_quadratically_for_linear_g() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
    let profile = DampingProfileF64::interval(0.2, 0.5, 1.0);
    let s = &StatePairF64::seeded_probes(8, 1, 1.0, 9)[0];
    let a = compute_x(s, &op, &profile, &g).unwrap();
    let b = compute_x(&s.scaled(3.0), &op, &profile, &g).unwrap();
    assert!((b.e1 - 9.0 * a.e1).abs() <= 1e-12 * b.e1);
}

#[test]
fn proposition_large_h_is_dominated_by_first_term() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
    let base = RateFunctionF64::power(1.0, 1e3).unwrap();
    let init = &StatePairF64::seeded_probes(8, 1, 1.0, 1)[0];
    let params = PropositionParams {
        h: 10.0,
        s0: 1.0,
        rate_constant: 1.0,
        c: Some(1.0),
        dt: 1e-3,
        horizon_cap: 50.0,
    };
    let rep = proposition_check(&op, &DampingProfileF64::constant(1.0), &g, init, &base, params).unwrap();
    assert_eq!(rep.holds, Some(true));
    assert!(rep.first_term > rep.energy_at_s0);
    assert!(!rep.truncated);
}

#[test]
fn proposition_small_h_truncates_window() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
    let base = RateFunctionF64::power(1.0, 1e3).unwrap();
    let init = &StatePairF64::seeded_probes(8, 1, 1.0, 1)[0];
    let params = PropositionParams {
        h: 1e-3,
        s0: 0.0,
        rate_constant: 1.0,
        c: None,
        dt: 1e-2,
        horizon_cap: 20.0,
    };
    let rep = proposition_check(&op, &DampingProfileF64::constant(1.0), &g, init, &base, params).unwrap();
    assert!(rep.truncated);
    assert!(rep.simulated_window <= 20.0 + 1e-12);
    assert!(rep.c_required.is_finite() && rep.c_required > 0.0);
    assert!(proposition_check(&op, &DampingProfileF64::constant(1.0), &g, &StatePairF64::zeros(8), &base, params).is_err());
}

fn nl_settings() -> NonlinearDecaySettings<f64> {
    NonlinearDecaySettings {
        t_sim: 30.0,
        dt: 5e-3,
        sampling: Sampling::Stride { every: 20 },
        window: FitWindow::new(1.0, 30.0),
        rate_constant: 1.0,
        c0: 1.0,
        c_prime: 1.0,
        obs_constant: None,
    }
}

#[test]
fn nonlinear_linear_law_full_damping_decays() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let g = validate_damping(&DampingLaw::Linear { scale: 1.0 }).unwrap();
    let base = RateFunctionF64::power(1.0, 1e3).unwrap();
    let init = &StatePairF64::seeded_probes(8, 1, 1.0, 2)[0];
    let rep = nonlinear_decay_check(&op, &DampingProfileF64::constant(1.0), &g, init, &base, &nl_settings()).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.notes);
    let fit = rep.fit.unwrap();
    assert!(fit.constant.is_finite());
    assert!(rep.max_identity_residual.unwrap() <= 1e-8);
    let ex = rep.exponent_fits.unwrap();
    assert_eq!(ex.exponents.quoted, 20.0);
    assert_eq!(ex.exponents.composed, 27.0);
}

#[test]
fn nonlinear_without_damping_is_hypothesis_unmet() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let g = validate_damping(&DampingLaw::Cubic { scale: 1.0 }).unwrap();
    let base = RateFunctionF64::power(1.0, 1e3).unwrap();
    let init = &StatePairF64::seeded_probes(8, 1, 1.0, 2)[0];
    let rep = nonlinear_decay_check(&op, &DampingProfileF64::constant(0.0), &g, init, &base, &nl_settings()).unwrap();
    assert_eq!(rep.verdict, Verdict::HypothesisUnmet);
}
