use decaylab::decay::{fit_decay_constant, NormChoice};
use decaylab::dynamics::solve_damped_linear;
use decaylab::io;
use decaylab::lemma::{saturating_h, LemmaGrid};
use decaylab::nonlinear::DampingLaw;
use decaylab::observability::Gramian;
use decaylab::rate::RateSpec;
use decaylab::{DampingMapF64, DampingProfileF64, RateFunctionF64, SampledHF64, SpectralOperatorF64, StatePairF64};

#[test]
fn trace_csv_round_trip_is_exact() {
    let op = SpectralOperatorF64::dirichlet(8, 1.0).unwrap();
    let damp = DampingMapF64::build(&op, DampingProfileF64::interval(0.3, 0.7, 1.0)).unwrap();
    let init = &StatePairF64::seeded_probes(8, 1, 1.0, 4)[0];
    let (_, tr) = solve_damped_linear(&op, &damp, init, 3.0, 0.01).unwrap();
    let mut buf = Vec::new();
    io::write_trace_csv(&tr, &mut buf).unwrap();
    let back = io::read_trace_csv(buf.as_slice(), tr.initial_norms).unwrap();
    assert_eq!(back, tr);
    back.validate(1e-10).unwrap();

    let g = RateFunctionF64::power(1.0, 1e3).unwrap();
    let a = fit_decay_constant(&tr, &g, NormChoice::Vx).unwrap();
    let b = fit_decay_constant(&back, &g, NormChoice::Vx).unwrap();
    assert_eq!(a.constant, b.constant);
}

#[test]
fn tampered_trace_fails_validation() {
    let text = "t,energy,flux\n0,1,0\n1,0.5,0.1\n";
    let norms = decaylab::GraphNormsF64 { vx: 2.0, da_v: 2.0, weak: 2.0 };
    let tr = io::read_trace_csv(text.as_bytes(), norms).unwrap();
    assert!(tr.validate(1e-10).is_err());
}

#[test]
fn malformed_csv_reports_row() {
    let text = "t,H\n1,1\n2,abc\n";
    let err = io::read_sampled_h::<f64, _>(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("row 2"), "{err}");
}

#[test]
fn sampled_h_round_trip() {
    let g = RateFunctionF64::power(1.0, 1e4).unwrap();
    let h = saturating_h(&g, 1.0, LemmaGrid { t_min: 1.0, t_max: 1e3, points: 50 }).unwrap();
    let mut buf = Vec::new();
    io::write_sampled_h(&h, &mut buf).unwrap();
    let back: SampledHF64 = io::read_sampled_h(buf.as_slice()).unwrap();
    assert_eq!(back, h);
}

#[test]
fn rate_table_from_csv() {
    let text = "x,G\n0.1,0.01\n0.5,0.25\n1.0,1.0\n";
    let g = io::read_rate_table::<f64, _>(text.as_bytes()).unwrap();
    assert!(matches!(g.spec(), RateSpec::Tabulated { .. }));
    assert!((g.eval(0.3).unwrap() - 0.13).abs() < 1e-14);
    assert!((g.inverse(0.13).unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn gramian_matrix_round_trip() {
    let op = SpectralOperatorF64::dirichlet(6, 1.0).unwrap();
    let damp = DampingMapF64::build(&op, DampingProfileF64::interval(0.1, 0.4, 1.0)).unwrap();
    let gram = Gramian::assemble(&op, &damp, 2.0).unwrap();
    let mut buf = Vec::new();
    io::write_matrix_csv(&gram.q, &mut buf).unwrap();
    let back = io::read_matrix_csv::<f64, _>(buf.as_slice()).unwrap();
    assert_eq!(back, gram.q);
}

#[test]
fn json_round_trips() {
    let laws = vec![
        DampingLaw::Cubic { scale: 1.0 },
        DampingLaw::OddPower { exponent: 5.0, scale: 0.5 },
        DampingLaw::Table { s: vec![0.0, 1.0], g: vec![0.0, 2.0] },
    ];
    let mut buf = Vec::new();
    io::write_json(&laws, &mut buf).unwrap();
    assert!(buf.ends_with(b"\n"));
    let back: Vec<DampingLaw<f64>> = io::read_json(buf.as_slice()).unwrap();
    assert_eq!(back, laws);

    let legacy: DampingLaw<f64> = serde_json::from_str(r#"{"kind":"custom_table","s":[0,1],"g":[0,1]}"#).unwrap();
    assert!(matches!(legacy, DampingLaw::Table { .. }));
}

#[test]
fn plot_csv_has_header_and_rows() {
    let mut buf = Vec::new();
    io::write_plot_csv(&[1.0, 2.0], &[0.5, 0.25], &[1.0, 0.5], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("t,E,bound"));
    assert_eq!(text.lines().count(), 3);
    assert!(io::write_plot_csv(&[1.0], &[0.5, 0.1], &[1.0], Vec::new()).is_err());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    io::write_pairs(["x", "y"], &[1.0, 2.0], &[3.0, 4.0], io::create(&path).unwrap()).unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = io::read_pairs(io::open(&path).unwrap()).unwrap();
    assert_eq!((x, y), (vec![1.0, 2.0], vec![3.0, 4.0]));
    assert!(io::open(dir.path().join("missing.csv")).is_err());
}
