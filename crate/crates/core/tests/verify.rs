use approx::assert_relative_eq;

use qflow::integrator::{run, twin_run, twin_run_pair, Perturbation, Probe, TimeConfig};
use qflow::paracalc::DyadicPartition;
use qflow::qtensor::{commutator, mat_mul, mat_sub, trace, Mat3, ModelParams, QTensorField, State, VelocityField};
use qflow::random::{self, Draw, Spectrum};
use qflow::spectral::{Axis, Grid, RealField};
use qflow::verify::*;

use std::f64::consts::PI;

fn params(a: f64) -> ModelParams {
    ModelParams::new(a, 0.5, 1.0, 1.0, 0.1, 0.1).unwrap()
}

fn random_state(n: usize, seed: u64, kmax: f64, q_amp: f64) -> State {
    let g = Grid::standard(n).unwrap();
    let band = Spectrum::new(1.0, kmax, 1.0);
    let mut rng = random::rng(seed);
    let u = random::random_solenoidal(&g, &band, Draw::Gaussian, 0.5, &mut rng);
    let q = random::random_field(&g, 5, &band, Draw::Gaussian, q_amp, &mut rng);
    State::new(VelocityField::from_spectral(u.leray_project()), QTensorField::from_spectral(q), 0.0)
}

fn cos_x(g: &Grid, eps: f64) -> QTensorField {
    QTensorField::from_real(RealField::from_fn(g, 5, |x, _, v| v[0] = eps * x.cos()))
}

#[test]
fn cumulative_integral_is_exact_for_linear_data() {
    let t = [0.0, 0.5, 1.5, 2.0];
    let y: Vec<f64> = t.iter().map(|t| 2.0 * t + 1.0).collect();
    let c = cumulative_integral(&t, &y);
    for (ti, ci) in t.iter().zip(&c) {
        assert_relative_eq!(*ci, ti * ti + ti, epsilon = 1e-14);
    }
    assert!(cumulative_integral(&[], &[]).is_empty());
}

#[test]
fn report_verdicts_and_csv() {
    let mut r = Report::new("demo", 0xab, 1e-3);
    r.measure("x", 1.5);
    r.fit("c", 2.0);
    assert_eq!(r.verdict(), "FAIL");
    r.passed = true;
    assert_eq!(r.verdict(), "PASS");
    r.vacuous = true;
    assert_eq!(r.verdict(), "PASS (vacuous)");
    assert_eq!(r.get("x"), Some(1.5));
    assert_eq!(r.get("c"), Some(2.0));
    assert_eq!(r.get("y"), None);
    let rows = r.csv_rows();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], "demo,00000000000000ab,PASS (vacuous),1e-3,measured,x,1.5000000000000000e0");
    assert!(rows[1].ends_with(",fitted,c,2.0000000000000000e0"));
    assert_eq!(Report::CSV_HEADER.split(',').count(), rows[0].split(',').count());
}

/// Dense evaluation of the two cancellation integrals. With `misprint` the
/// second integrand is `tr{(ΔQ₁Q₂ − Q₁ΔQ₂)∇u}` instead of the commutator.
fn dense_cancellation(q1: &QTensorField, q2: &QTensorField, u: &VelocityField, misprint: bool) -> (f64, f64) {
    let g = q1.grid();
    let lap1 = QTensorField::from_spectral(q1.spectral().laplacian());
    let lap2 = QTensorField::from_spectral(q2.spectral().laplacian());
    let d: Vec<Vec<f64>> = [(0, Axis::X1), (0, Axis::X2), (1, Axis::X1), (1, Axis::X2)]
        .iter()
        .map(|&(c, ax)| u.spectral().component(c).derive(ax, 1).to_real().comp(0).to_vec())
        .collect();
    let (mut t1, mut t2) = (0.0, 0.0);
    for p in 0..g.size() {
        // grad[i][j] = ∂_i u_j
        let mut grad: Mat3 = [[0.0; 3]; 3];
        grad[0][0] = d[0][p];
        grad[1][0] = d[1][p];
        grad[0][1] = d[2][p];
        grad[1][1] = d[3][p];
        let mut omega: Mat3 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                omega[i][j] = 0.5 * (grad[i][j] - grad[j][i]);
            }
        }
        let (l, b) = (lap1.mat_at(p), q2.mat_at(p));
        let second = if misprint {
            mat_sub(&mat_mul(&l, &b), &mat_mul(&q1.mat_at(p), &lap2.mat_at(p)))
        } else {
            commutator(&l, &b)
        };
        t1 += trace(&mat_mul(&commutator(&omega, &b), &l));
        t2 += trace(&mat_mul(&second, &grad));
    }
    (t1 * g.cell_area(), t2 * g.cell_area())
}

#[test]
fn cancellation_terms_match_dense_evaluation() {
    let a = random_state(32, 1, 10.0, 1.0);
    let b = random_state(32, 2, 10.0, 1.0);
    let (t1, t2) = cancellation_terms(&a.q, &b.q, &a.u);
    let (o1, o2) = dense_cancellation(&a.q, &b.q, &a.u, false);
    assert_relative_eq!(t1, o1, max_relative = 1e-10);
    assert_relative_eq!(t2, o2, max_relative = 1e-10);
    let r = cancellation_check(&a.q, &b.q, &a.u);
    assert_eq!(r.verdict(), "PASS");
    assert!(r.get("relative").unwrap() < 1e-12);
}

#[test]
fn misprinted_second_integrand_does_not_cancel() {
    let a = random_state(32, 3, 10.0, 1.0);
    let b = random_state(32, 4, 10.0, 1.0);
    let (t1, t2) = dense_cancellation(&a.q, &b.q, &a.u, true);
    assert!((t1 + t2).abs() > 1e-3 * (t1.abs() + t2.abs()), "t1 {t1} t2 {t2}");
    // With Q₁ = Q₂ both forms agree and cancel.
    let (t1, t2) = dense_cancellation(&a.q, &a.q, &a.u, true);
    assert!((t1 + t2).abs() <= 1e-10 * (t1.abs() + t2.abs()));
}

#[test]
fn cancellation_on_zero_fields_is_vacuous() {
    let g = Grid::standard(16).unwrap();
    let z = QTensorField::zeros(&g);
    let r = cancellation_check(&z, &z, &VelocityField::zeros(&g));
    assert_eq!(r.verdict(), "PASS (vacuous)");
}

#[test]
fn transport_check_on_random_and_zero_fields() {
    let s = random_state(32, 5, 7.0, 1.0);
    let r = transport_check(&s.u, &s.q, 1e-10);
    assert!(r.passed && !r.vacuous, "{r}");
    let g = Grid::standard(16).unwrap();
    let r = transport_check(&VelocityField::zeros(&g), &QTensorField::zeros(&g), 1e-10);
    assert_eq!(r.verdict(), "PASS (vacuous)");
}

#[test]
fn energy_balance_and_convergence() {
    let s0 = random_state(32, 6, 3.0, 0.3);
    let p = params(0.3);
    let coarse = run(&s0, &p, &TimeConfig::fixed(0.01, 0.3), &[Probe::Energy], 100).unwrap();
    let fine = run(&s0, &p, &TimeConfig::fixed(0.005, 0.3), &[Probe::Energy], 100).unwrap();
    let r = energy_balance_check(&fine, &p, ENERGY_TOL).unwrap();
    assert!(r.passed, "{r}");
    let c = energy_convergence_check(&[&coarse, &fine], &p, 1.5).unwrap();
    assert!(c.passed, "{c}");
    assert_eq!(
        energy_convergence_check(&[&fine], &p, 1.5).unwrap_err(),
        VerifyError::TooFewSamples { needed: 2, got: 1 }
    );
    // Without the probe the series is rebuilt from stored states.
    let bare = run(&s0, &p, &TimeConfig::fixed(0.01, 0.3), &[], 1).unwrap();
    let (t, e, _) = energy_series(&bare, &p).unwrap();
    assert_eq!(t.len(), 31);
    assert_relative_eq!(e[0], coarse.series.column("energy").unwrap()[0], max_relative = 1e-14);
}

#[test]
fn lp_bound_modes() {
    let s0 = random_state(16, 7, 3.0, 0.3);
    let traj = run(&s0, &params(0.3), &TimeConfig::fixed(0.05, 0.5), &[Probe::Lp(4.0)], 1).unwrap();
    let fitted = lp_bound_check(&traj, 2.0, None).unwrap();
    assert!(fitted.passed, "{fitted}");
    let c = fitted.get("c").unwrap();
    assert!(lp_bound_check(&traj, 2.0, Some(c)).unwrap().passed);
    assert!(!lp_bound_check(&traj, 2.0, Some(-10.0)).unwrap().passed);
    assert!(matches!(lp_bound_check(&traj, 0.5, None), Err(VerifyError::Invalid(_))));
    // Missing column: recomputed from the stored states.
    let r = lp_bound_check(&traj, 3.0, None).unwrap();
    assert_relative_eq!(r.get("q0_lp").unwrap(), s0.q.real().lp_norm(6.0), max_relative = 1e-14);
}

#[test]
fn linf_interpolation_of_a_single_mode() {
    // f = cos x: L∞ = 1, L² = π√2, H¹ = 2π, and |k| = 1 lies in block 0 only,
    // so ‖f‖_{Ḣ^{1+s}} = π√2 for every s.
    let g = Grid::standard(32).unwrap();
    let part = DyadicPartition::new(&g);
    let f = RealField::from_fn(&g, 1, |x, _, v| v[0] = x.cos()).to_spectral();
    let s = 0.5;
    let norms = linf_interp_norms(&f, s, &part);
    let want = [1.0, PI * 2f64.sqrt(), 2.0 * PI, PI * 2f64.sqrt()];
    for (a, b) in norms.iter().zip(want) {
        assert_relative_eq!(*a, b, max_relative = 1e-12);
    }
    let ns = [1, 2, 3, 4];
    let c = ns
        .iter()
        .map(|&n| 1.0 / (want[1] + (n as f64).sqrt() * want[2] + (-(n as f64) * s).exp2() * want[3]))
        .fold(0.0, f64::max);
    let r = linf_interp_check(&f, s, &ns, &part, Some(c * 1.000001)).unwrap();
    assert!(r.passed);
    assert_relative_eq!(r.get("c").unwrap(), c, max_relative = 1e-12);
    assert!(!linf_interp_check(&f, s, &ns, &part, Some(c * 0.999)).unwrap().passed);
    assert!(matches!(linf_interp_check(&f, 0.0, &ns, &part, None), Err(VerifyError::Invalid(_))));
}

#[test]
fn force_estimate_of_a_small_single_mode() {
    // For tiny ε the force is −aQ, so ⟨P, ΔQ⟩_{Ḣˢ} = a‖∇Q‖²_{Ḣˢ} and the ratio
    // is a / (1 + h + h²) with h = ‖Q‖_{H²} = ε·2·π√2, the Bessel weight
    // (1 + |k|²)² being 4 at |k| = 1.
    let g = Grid::standard(32).unwrap();
    let part = DyadicPartition::new(&g);
    let eps = 1e-4;
    let p = params(0.7);
    let r = force_estimate_check(&cos_x(&g, eps), 0.5, &p, &part, None).unwrap();
    let h = eps * 2.0 * PI * 2f64.sqrt();
    assert_relative_eq!(r.get("ratio").unwrap(), p.a / (1.0 + h + h * h), max_relative = 1e-6);
    let (lhs, rhs) = force_estimate_terms(&QTensorField::zeros(&g), 0.5, &p, &part);
    assert_eq!((lhs, rhs), (0.0, 0.0));
    assert_eq!(force_estimate_check(&QTensorField::zeros(&g), 0.5, &p, &part, None).unwrap().verdict(), "PASS (vacuous)");
}

#[test]
fn uniqueness_on_identical_and_separating_twins() {
    let s0 = random_state(16, 8, 3.0, 0.05);
    let p = params(-2.0);
    let tc = TimeConfig::fixed(0.02, 0.6);
    let same = twin_run_pair(&s0, &s0, &p, &tc, 10).unwrap();
    assert_eq!(uniqueness_check(&same, None).verdict(), "PASS (vacuous)");
    let reg = difference_regularity_check(&same);
    assert!(reg.passed && reg.vacuous);

    let pert = Perturbation {
        eps: 1e-3,
        seed: 3,
        spectrum: Spectrum::new(1.0, 2.0, 0.0),
    };
    let diff = twin_run(&s0, &pert, &p, &tc, 10).unwrap();
    let c = uniqueness_constant(&diff);
    assert!(c > 0.0 && c.is_finite(), "c = {c}");
    assert_eq!(fit_uniqueness_constant(&[&same, &diff]), c);
    assert!(uniqueness_check(&diff, None).passed);
    assert!(uniqueness_check(&diff, Some(c)).passed);
    assert!(!uniqueness_check(&diff, Some(0.5 * c)).passed);
    let reg = difference_regularity_check(&diff);
    assert!(reg.passed && !reg.vacuous);
}

#[test]
fn chi_model_of_known_norms() {
    use qflow::integrator::{SolutionNorms, TwinSample};
    let n = SolutionNorms {
        u_l2: 1.0,
        grad_u: 1.0,
        q_l2: 1.0,
        grad_q: 1.0,
        lap_q: 1.0,
    };
    let s = TwinSample {
        first: n,
        second: n,
        ..Default::default()
    };
    // 2 + 2·2 + 1 + 1 + 1 + 2 + 2 + 1
    assert_eq!(chi_model(&s), 14.0);
}

#[test]
fn lemma_runner() {
    assert_eq!(run_lemma("bogus", 1, 1).unwrap_err(), VerifyError::UnknownCheck("bogus".into()));
    for name in ["partition", "cubic-trace", "transport"] {
        let reports = run_lemma(name, 4, 1).unwrap();
        assert!(reports.iter().all(|r| r.passed), "{name}");
    }
    assert!(LEMMAS.contains(&"product"));
}
