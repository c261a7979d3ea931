use approx::assert_relative_eq;

use qflow::integrator::{
    self, auto_dt, run, step_with_dt, twin_run, twin_run_pair, Perturbation, Probe, StepError, TimeConfig, TwinDiff,
};
use qflow::qtensor::{coeffs_to_mat, ModelParams, QTensorField, State, VelocityField};
use qflow::random::{self, Draw, Spectrum};
use qflow::spectral::{Grid, RealField};

use std::f64::consts::PI;

type M = [[f64; 3]; 3];

fn params(a: f64) -> ModelParams {
    ModelParams::new(a, 0.5, 1.0, 1.0, 0.1, 0.1).unwrap()
}

fn smooth_state(n: usize, seed: u64, kmax: f64) -> State {
    let g = Grid::standard(n).unwrap();
    let band = Spectrum::new(1.0, kmax, 1.0);
    let mut rng = random::rng(seed);
    let u = random::random_solenoidal(&g, &band, Draw::Gaussian, 0.5, &mut rng);
    let q = random::random_field(&g, 5, &band, Draw::Gaussian, 0.3, &mut rng);
    State::new(VelocityField::from_spectral(u.leray_project()), QTensorField::from_spectral(q), 0.0)
}

fn taylor_green(g: &Grid, amp: f64) -> VelocityField {
    VelocityField::from_fn(g, |x, y| [amp * x.sin() * y.cos(), -amp * x.cos() * y.sin()])
}

// Dense-matrix oracle for the spatially uniform Q equation Q' = Γ P(Q).

fn mm(a: &M, b: &M) -> M {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn force(q: &M, p: &ModelParams) -> M {
    let q2 = mm(q, q);
    let tr2 = q2[0][0] + q2[1][1] + q2[2][2];
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { tr2 / 3.0 } else { 0.0 };
            o[i][j] = p.gamma * (-p.a * q[i][j] + p.b * (q2[i][j] - id) - p.c * tr2 * q[i][j]);
        }
    }
    o
}

fn axpy(q: &M, h: f64, k: &M) -> M {
    let mut o = *q;
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] += h * k[i][j];
        }
    }
    o
}

fn rk4(q0: &M, p: &ModelParams, t: f64, steps: usize) -> M {
    let h = t / steps as f64;
    let mut q = *q0;
    for _ in 0..steps {
        let k1 = force(&q, p);
        let k2 = force(&axpy(&q, h / 2.0, &k1), p);
        let k3 = force(&axpy(&q, h / 2.0, &k2), p);
        let k4 = force(&axpy(&q, h, &k3), p);
        for i in 0..3 {
            for j in 0..3 {
                q[i][j] += h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
        }
    }
    q
}

fn uniform_error(dt: f64) -> f64 {
    let g = Grid::standard(8).unwrap();
    let p = params(-0.4);
    let q0 = coeffs_to_mat(&[0.3, -0.5, 0.2, 0.1, -0.4]);
    let s0 = State::new(VelocityField::zeros(&g), QTensorField::uniform(&g, &q0), 0.0);
    let traj = run(&s0, &p, &TimeConfig::fixed(dt, 1.0), &[], 1000).unwrap();
    let want = rk4(&q0, &p, 1.0, 4000);
    let got = traj.last().q.mat_at(5);
    let mut err: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            err = err.max((got[i][j] - want[i][j]).abs());
        }
    }
    err
}

#[test]
fn uniform_tensor_follows_the_bulk_ode() {
    assert!(uniform_error(1e-3) < 1e-6);
}

#[test]
fn time_stepping_is_second_order() {
    let (e1, e2) = (uniform_error(0.02), uniform_error(0.01));
    let order = (e1 / e2).log2();
    assert!((1.8..2.2).contains(&order), "observed order {order}");
}

#[test]
fn taylor_green_decays_exponentially() {
    let g = Grid::standard(32).unwrap();
    let p = params(0.3);
    let s0 = State::new(taylor_green(&g, 1.0), QTensorField::zeros(&g), 0.0);
    let traj = run(&s0, &p, &TimeConfig::fixed(0.05, 1.0), &[Probe::L2], 1).unwrap();
    let l2 = traj.series.column("u_l2").unwrap();
    let l0 = l2[0];
    for (t, v) in traj.times().iter().zip(&l2) {
        assert_relative_eq!(*v, l0 * (-2.0 * p.nu * t).exp(), max_relative = 1e-12);
    }
    let want = taylor_green(&g, (-2.0 * p.nu).exp());
    let diff = traj.last().u.spectral().sub(want.spectral()).coeff_norm();
    assert!(diff <= 1e-12 * want.spectral().coeff_norm());
}

#[test]
fn small_single_mode_tensor_decays_at_the_linear_rate() {
    // Q = ε cos x E₁ with ε tiny: Q̂ decays like exp(−Γ(a + L|k|²)t).
    let g = Grid::standard(16).unwrap();
    let eps = 1e-7;
    let p = params(0.3);
    let q = QTensorField::from_real(RealField::from_fn(&g, 5, |x, _, v| v[0] = eps * x.cos()));
    let s0 = State::new(VelocityField::zeros(&g), q, 0.0);
    let traj = run(&s0, &p, &TimeConfig::fixed(0.01, 1.0), &[Probe::L2], 10).unwrap();
    let l2 = traj.series.column("q_l2").unwrap();
    let rate = p.gamma * (p.a + p.l);
    assert_relative_eq!(*l2.last().unwrap(), l2[0] * (-rate).exp(), max_relative = 1e-5);
}

#[test]
fn energy_of_known_states() {
    let g = Grid::standard(16).unwrap();
    let p = params(0.3);
    // ∫ sin²x cos²y = π², so ‖u_TG‖² = 2π²A² and ‖∇u_TG‖² = 4π²A².
    let a: f64 = 0.7;
    let s = State::new(taylor_green(&g, a), QTensorField::zeros(&g), 0.0);
    assert_relative_eq!(integrator::energy(&s, &p), 2.0 * PI * PI * a * a, max_relative = 1e-12);
    assert_relative_eq!(
        integrator::energy_dissipation(&s, &p),
        2.0 * p.nu * 4.0 * PI * PI * a * a,
        max_relative = 1e-12
    );
    // Q = ε cos x E₁: ‖Q‖² = ‖∇Q‖² = 2π²ε².
    let eps: f64 = 0.2;
    let q = QTensorField::from_real(RealField::from_fn(&g, 5, |x, _, v| v[0] = eps * x.cos()));
    let s = State::new(VelocityField::zeros(&g), q, 0.0);
    assert_relative_eq!(integrator::energy(&s, &p), 2.0 * PI * PI * eps * eps * (1.0 + p.l), max_relative = 1e-12);
}

#[test]
fn energy_balance_holds_on_a_smooth_run() {
    let s0 = smooth_state(32, 4, 3.0);
    let p = params(0.3);
    let traj = run(&s0, &p, &TimeConfig::fixed(0.002, 0.2), &[Probe::Energy], 1000).unwrap();
    let e = traj.series.column("energy").unwrap();
    let d = traj.series.column("dissipation").unwrap();
    let t = traj.times();
    let integral: f64 = (1..t.len()).map(|k| 0.5 * (d[k] + d[k - 1]) * (t[k] - t[k - 1])).sum();
    let drop = e[0] - e.last().unwrap();
    assert!(drop > 0.0);
    assert!((drop - integral).abs() <= 1e-3 * integral, "drop {drop} integral {integral}");
}

#[test]
fn stored_states_follow_the_stride() {
    let s0 = smooth_state(16, 2, 2.0);
    let traj = run(&s0, &params(0.3), &TimeConfig::fixed(0.1, 1.0), &[Probe::L2, Probe::H1], 3).unwrap();
    let stored: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
    let want = [0.0, 0.3, 0.6, 0.9, 1.0];
    assert_eq!(stored.len(), want.len());
    for (a, b) in stored.iter().zip(want) {
        assert_relative_eq!(*a, b, epsilon = 1e-12);
    }
    assert_eq!(traj.series.len(), 11);
    assert_eq!(traj.series.names, ["u_l2", "q_l2", "u_h1", "q_h1"]);
}

#[test]
fn last_fixed_step_is_shortened_to_hit_the_end() {
    let s0 = smooth_state(16, 2, 2.0);
    let traj = run(&s0, &params(0.3), &TimeConfig::fixed(0.3, 1.0), &[], 1).unwrap();
    let t = traj.times();
    assert_eq!(t.len(), 5);
    assert_relative_eq!(t[3], 0.9, epsilon = 1e-12);
    assert_eq!(t[4], 1.0);
    assert_eq!(traj.last().t, 1.0);
}

#[test]
fn auto_step_respects_both_limits() {
    let g = Grid::standard(16).unwrap();
    let p = params(0.0);
    let rest = State::zeros(&g);
    assert_relative_eq!(auto_dt(&rest, &p, 0.4), 0.4 * g.dx(), max_relative = 1e-15);
    let fast = State::new(taylor_green(&g, 10.0), QTensorField::zeros(&g), 0.0);
    assert!(auto_dt(&fast, &p, 0.4) < 0.4 * g.dx() / 9.0);
    let stiff = params(200.0);
    assert_relative_eq!(auto_dt(&rest, &stiff, 0.4), 1.0 / 200.0, max_relative = 1e-15);
    let traj = run(&smooth_state(16, 1, 2.0), &p, &TimeConfig::auto(0.5), &[], 1).unwrap();
    assert_eq!(traj.last().t, 0.5);
}

#[test]
fn invalid_time_configuration_is_reported() {
    let s0 = smooth_state(16, 1, 2.0);
    let err = run(&s0, &params(0.3), &TimeConfig::fixed(-0.1, 1.0), &[], 1).unwrap_err();
    assert!(matches!(err.error, StepError::Config(_)));
    assert_eq!(err.partial.states.len(), 1);
    let mut tc = TimeConfig::auto(1.0);
    tc.cfl = 1.5;
    assert!(matches!(tc.validate(), Err(StepError::Config(_))));
}

#[test]
fn unstable_steps_stop_the_run_with_partial_output() {
    let g = Grid::standard(16).unwrap();
    let q0 = coeffs_to_mat(&[3.0, -2.0, 1.0, 2.0, 1.0]);
    let s0 = State::new(VelocityField::zeros(&g), QTensorField::uniform(&g, &q0), 0.0);
    let err = run(&s0, &params(0.3), &TimeConfig::fixed(5.0, 100.0), &[Probe::L2], 1).unwrap_err();
    assert!(matches!(err.error, StepError::NonFinite { .. } | StepError::BlowUp { .. }));
    assert!(!err.partial.series.is_empty());
    assert!(err.partial.last().t < 100.0);
}

#[test]
fn identical_twins_do_not_separate() {
    let s0 = smooth_state(16, 3, 3.0);
    let d = twin_run_pair(&s0, &s0, &params(0.3), &TimeConfig::fixed(0.05, 0.5), 2).unwrap();
    assert!(d.phi().iter().all(|&p| p == 0.0));
    assert!(d.chi.iter().all(|&c| c == 0.0));
    assert_eq!(d.samples.len(), 11);
    assert_eq!(d.snapshots.last().unwrap().0, 0.5);
}

#[test]
fn twin_series_round_trip() {
    let s0 = smooth_state(16, 3, 3.0);
    let pert = Perturbation {
        eps: 1e-3,
        seed: 9,
        spectrum: Spectrum::new(1.0, 2.0, 0.0),
    };
    let d = twin_run(&s0, &pert, &params(0.3), &TimeConfig::fixed(0.05, 0.5), 5).unwrap();
    assert!(d.phi()[0] > 0.0);
    let back = TwinDiff::from_series(d.l, &d.to_series()).unwrap();
    assert_eq!(back.samples, d.samples);
    assert_eq!(back.chi, d.chi);
    let mut ns = d.to_series();
    ns.names[0] = "other".into();
    assert!(TwinDiff::from_series(d.l, &ns).unwrap_err().contains("phi"));
}

#[test]
fn single_step_keeps_velocity_solenoidal_and_mean_free() {
    let s0 = smooth_state(32, 6, 10.0);
    let s1 = step_with_dt(&s0, &params(0.3), 0.01).unwrap();
    assert!(s1.u.relative_divergence() < 1e-13);
    assert!(s1.u.spectral().mean(0).abs() < 1e-14 && s1.u.spectral().mean(1).abs() < 1e-14);
    assert_relative_eq!(s1.t, 0.01);
}
