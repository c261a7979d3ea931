use approx::assert_relative_eq;
use proptest::prelude::*;

use qflow::qtensor::{
    self, coeffs_to_mat, commutator, mat_mul, mat_to_coeffs, planar_rotation, trace, transpose, Mat3, ModelParams,
    QTensorField, VelocityField,
};
use qflow::random::{self, Draw, Spectrum};
use qflow::spectral::Grid;

fn params() -> ModelParams {
    ModelParams::new(0.3, 0.7, 1.1, 0.9, 0.1, 0.2).unwrap()
}

/// Fields band-limited to `|k| < n/4`, so every quadratic product is alias-free.
fn sample(n: usize, seed: u64) -> (VelocityField, QTensorField) {
    let g = Grid::standard(n).unwrap();
    let band = Spectrum::new(1.0, (n / 4 - 1) as f64, 1.0);
    let mut rng = random::rng(seed);
    let u = random::random_solenoidal(&g, &band, Draw::Gaussian, 1.0, &mut rng);
    let q = random::random_field(&g, 5, &band, Draw::Gaussian, 1.0, &mut rng);
    (VelocityField::from_spectral(u.leray_project()), QTensorField::from_spectral(q))
}

fn coeffs() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-3.0..3.0f64)
}

fn frob(m: &Mat3) -> f64 {
    trace(&mat_mul(&transpose(m), m)).sqrt()
}

#[test]
fn uniaxial_direction_is_a_multiple_of_the_second_basis_matrix() {
    let m = coeffs_to_mat(&[0.0, -(6f64.sqrt()) / 3.0, 0.0, 0.0, 0.0]);
    let want = [[-1.0 / 3.0, 0.0, 0.0], [0.0, -1.0 / 3.0, 0.0], [0.0, 0.0, 2.0 / 3.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert_relative_eq!(m[i][j], want[i][j], epsilon = 1e-15);
        }
    }
}

#[test]
fn bulk_force_on_a_uniform_field_is_the_pointwise_force() {
    let g = Grid::standard(8).unwrap();
    let q0 = coeffs_to_mat(&[0.2, -0.4, 0.1, 0.3, -0.2]);
    let p = params();
    let f = qtensor::bulk_potential_force(&QTensorField::uniform(&g, &q0), &p);
    let want = qtensor::bulk_force_pointwise(&q0, &p);
    for i in [0, 17, 63] {
        let got = f.mat_at(i);
        for r in 0..3 {
            for c in 0..3 {
                assert_relative_eq!(got[r][c], want[r][c], epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn molecular_field_adds_the_elastic_laplacian() {
    let (_, q) = sample(32, 3);
    let p = params();
    let h = qtensor::molecular_field(&q, &p);
    let mut want = qtensor::bulk_potential_force(&q, &p).spectral().clone();
    want.add_scaled(p.l, &q.spectral().laplacian());
    assert!(h.spectral().sub(&want).coeff_norm() <= 1e-13 * want.coeff_norm());
}

#[test]
fn corotation_under_shear_matches_dense_commutator() {
    // u = (sin y, 0): ω = (∂₁u₂ − ∂₂u₁)/2 = −cos(y)/2.
    let g = Grid::standard(16).unwrap();
    let u = VelocityField::from_fn(&g, |_, y| [y.sin(), 0.0]);
    let q0 = coeffs_to_mat(&[0.5, 0.1, -0.3, 0.2, 0.4]);
    let out = qtensor::corotation(&QTensorField::uniform(&g, &q0), &u);
    for i in 0..g.size() {
        let (_, y) = g.point(i);
        let want = commutator(&planar_rotation(-0.5 * y.cos()), &q0);
        let got = out.mat_at(i);
        for r in 0..3 {
            for c in 0..3 {
                assert_relative_eq!(got[r][c], want[r][c], epsilon = 1e-13);
            }
        }
    }
}

#[test]
fn taylor_green_convection_is_a_pure_gradient() {
    let g = Grid::standard(32).unwrap();
    let u = VelocityField::from_fn(&g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]);
    let s = qflow::State::new(u.clone(), QTensorField::zeros(&g), 0.0);
    let p = params();
    let rhs = qtensor::velocity_rhs(&s, &p);
    // Only the viscous term survives: −2ν u.
    let want = u.spectral().scaled(-2.0 * p.nu);
    assert!(rhs.spectral().sub(&want).coeff_norm() <= 1e-12 * want.coeff_norm());
}

#[test]
fn velocity_field_helpers() {
    let g = Grid::standard(16).unwrap();
    let u = VelocityField::from_fn(&g, |x, y| [1.0 + x.cos(), y.sin()]);
    assert!(u.relative_divergence() > 0.1);
    let p = u.projected();
    assert!(p.relative_divergence() < 1e-14);
    assert_eq!(p.spectral().mean(0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_maps_are_inverse_isometries(c in coeffs()) {
        let m = coeffs_to_mat(&c);
        prop_assert!(trace(&m).abs() < 1e-14);
        prop_assert_eq!(m, transpose(&m));
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((frob(&m) - norm).abs() <= 1e-13 * (1.0 + norm));
        let back = mat_to_coeffs(&m);
        for k in 0..5 {
            prop_assert!((back[k] - c[k]).abs() <= 1e-14 * (1.0 + norm));
        }
    }

    #[test]
    fn cubic_trace_bound(c in coeffs()) {
        let m = coeffs_to_mat(&c);
        let norm = frob(&m);
        let t3 = trace(&mat_mul(&mat_mul(&m, &m), &m));
        prop_assert!(6f64.sqrt() * t3.abs() <= norm.powi(3) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn corotation_stays_in_s0_and_is_orthogonal_to_q(c in coeffs(), w in -5.0..5.0f64) {
        let q = coeffs_to_mat(&c);
        let r = commutator(&planar_rotation(w), &q);
        prop_assert!(trace(&r).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((r[i][j] - r[j][i]).abs() < 1e-12);
            }
        }
        prop_assert!(trace(&mat_mul(&r, &q)).abs() <= 1e-12 * (1.0 + frob(&q).powi(2) * w.abs()));
    }

    #[test]
    fn elastic_stress_pairs_with_transport(seed in any::<u64>()) {
        // Energy exchange: ⟨L div σ, u⟩ = −L⟨u·∇Q − (ΩQ − QΩ), ΔQ⟩.
        let (u, q) = sample(32, seed);
        let p = params();
        let lhs = qtensor::elastic_stress_div(&q, &p).inner(u.spectral());
        let mut tr = qtensor::advection(&u, q.spectral());
        tr.add_scaled(-1.0, qtensor::corotation(&q, &u).spectral());
        let rhs = -p.l * tr.inner(&q.spectral().laplacian());
        let scale = p.l * u.l2_norm() * q.spectral().homogeneous_norm(1.0) * q.spectral().homogeneous_norm(2.0);
        prop_assert!((lhs - rhs).abs() <= 1e-11 * scale, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn transport_conserves_the_l2_norm(seed in any::<u64>()) {
        let (u, q) = sample(32, seed);
        let adv = qtensor::advection(&u, q.spectral()).inner(q.spectral());
        let rot = qtensor::corotation(&q, &u).spectral().inner(q.spectral());
        let scale = u.l2_norm() * q.spectral().homogeneous_norm(1.0) * q.l2_norm();
        prop_assert!(adv.abs() <= 1e-12 * scale);
        prop_assert!(rot.abs() <= 1e-12 * scale);
    }
}
