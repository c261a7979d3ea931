//! S₀ tensor algebra and the right-hand side of the Q-tensor / Navier-Stokes
//! system
//!
//! ```text
//! ∂ₜQ = −u·∇Q + ΩQ − QΩ + Γ H(Q),         H(Q) = P(Q) + LΔQ
//! ∂ₜu = 𝒫[−u·∇u + νΔu + L div(QΔQ − ΔQ Q − ∇Q⊙∇Q)],   div u = 0
//! P(Q) = −aQ + b(Q² − tr(Q²) Id/3) − c tr(Q²) Q
//! ```
//!
//! Conventions: `G_ij = ∂_i u_j`, `Ω = (G − Gᵀ)/2` embedded as a 3×3 matrix
//! with zero third row and column, `(∇Q⊙∇Q)_ij = tr(∂_iQ ∂_jQ)` and the
//! divergence of a matrix acts on its first index, `(div σ)_j = Σ_i ∂_i σ_ij`.
//!
//! Q is stored in the orthonormal Frobenius basis of S₀
//!
//! ```text
//! E₁ = diag(1, −1, 0)/√2       E₂ = diag(1, 1, −2)/√6
//! E₃ = (e₁e₂ᵀ + e₂e₁ᵀ)/√2     E₄ = (e₁e₃ᵀ + e₃e₁ᵀ)/√2     E₅ = (e₂e₃ᵀ + e₃e₂ᵀ)/√2
//! ```
//!
//! so reconstructed matrices are symmetric and traceless exactly and
//! `|Q|² = Σ cᵢ²` pointwise.
//!
//! Nonlinear terms are evaluated pseudo-spectrally: the pointwise expression
//! is summed on the grid, transformed, and truncated by the two-thirds rule.
//! The cubic term is formed as `D(D(tr Q²)·Q)`: the quadratic invariant is
//! dealiased first, then multiplied by Q and dealiased again.
//!
//! With a Friedrichs index `n` set, the truncated system replaces
//! `u·∇Q` by `J_n u·∇Q`, `Ω` by the rotation of `J_n u`, the convection by
//! `J_n 𝒫(J_n u·∇J_n u)` and the elastic forcing by `L J_n 𝒫 div(…)`. No
//! other term is truncated.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::spectral::{Axis, Grid, RealField, SpectralField};

pub type Mat3 = [[f64; 3]; 3];

const INV_SQRT6: f64 = 0.408_248_290_463_863_0;

/// Orthonormal basis `E₁..E₅` of S₀ (see module docs).
pub const S0_BASIS: [Mat3; 5] = [
    [[FRAC_1_SQRT_2, 0.0, 0.0], [0.0, -FRAC_1_SQRT_2, 0.0], [0.0, 0.0, 0.0]],
    [[INV_SQRT6, 0.0, 0.0], [0.0, INV_SQRT6, 0.0], [0.0, 0.0, -2.0 * INV_SQRT6]],
    [[0.0, FRAC_1_SQRT_2, 0.0], [FRAC_1_SQRT_2, 0.0, 0.0], [0.0, 0.0, 0.0]],
    [[0.0, 0.0, FRAC_1_SQRT_2], [0.0, 0.0, 0.0], [FRAC_1_SQRT_2, 0.0, 0.0]],
    [[0.0, 0.0, 0.0], [0.0, 0.0, FRAC_1_SQRT_2], [0.0, FRAC_1_SQRT_2, 0.0]],
];

/// Dense matrix of S₀ coefficients.
pub fn coeffs_to_mat(c: &[f64; 5]) -> Mat3 {
    let d1 = c[0] * FRAC_1_SQRT_2;
    let d2 = c[1] * INV_SQRT6;
    let o12 = c[2] * FRAC_1_SQRT_2;
    let o13 = c[3] * FRAC_1_SQRT_2;
    let o23 = c[4] * FRAC_1_SQRT_2;
    [
        [d1 + d2, o12, o13],
        [o12, -d1 + d2, o23],
        [o13, o23, -2.0 * d2],
    ]
}

/// Frobenius projection of a matrix onto S₀, in basis coefficients.
pub fn mat_to_coeffs(m: &Mat3) -> [f64; 5] {
    [
        (m[0][0] - m[1][1]) * FRAC_1_SQRT_2,
        (m[0][0] + m[1][1] - 2.0 * m[2][2]) * INV_SQRT6,
        (m[0][1] + m[1][0]) * FRAC_1_SQRT_2,
        (m[0][2] + m[2][0]) * FRAC_1_SQRT_2,
        (m[1][2] + m[2][1]) * FRAC_1_SQRT_2,
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_sub(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = *a;
    for (row, brow) in out.iter_mut().zip(b) {
        for (v, w) in row.iter_mut().zip(brow) {
            *v -= w;
        }
    }
    out
}

pub fn mat_scale(a: &Mat3, s: f64) -> Mat3 {
    let mut out = *a;
    for row in &mut out {
        for v in row {
            *v *= s;
        }
    }
    out
}

pub fn trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// `AB − BA`.
pub fn commutator(a: &Mat3, b: &Mat3) -> Mat3 {
    mat_sub(&mat_mul(a, b), &mat_mul(b, a))
}

/// Antisymmetric 3×3 matrix with `Ω₁₂ = ω`, `Ω₂₁ = −ω`.
pub fn planar_rotation(omega: f64) -> Mat3 {
    [[0.0, omega, 0.0], [-omega, 0.0, 0.0], [0.0, 0.0, 0.0]]
}

/// Pointwise bulk force `P(Q)` on a dense matrix.
pub fn bulk_force_pointwise(q: &Mat3, p: &ModelParams) -> Mat3 {
    let q2 = mat_mul(q, q);
    let tr2 = trace(&q2);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            out[i][j] = -p.a * q[i][j] + p.b * (q2[i][j] - tr2 * id / 3.0) - p.c * tr2 * q[i][j];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("parameter {name} must satisfy {constraint}, got {value}")]
    Constraint {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    #[error("cutoff index must be at least 1")]
    Cutoff,
}

/// Model constants. `c > 0`, `Γ > 0`, `ν > 0`, `L > 0`; `n_cutoff` selects
/// the Friedrichs-truncated system when present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
    pub nu: f64,
    /// Elastic constant `L`.
    pub l: f64,
    pub n_cutoff: Option<usize>,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, c: f64, gamma: f64, nu: f64, l: f64) -> Result<Self, ModelError> {
        let p = Self {
            a,
            b,
            c,
            gamma,
            nu,
            l,
            n_cutoff: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cutoff(mut self, n: Option<usize>) -> Self {
        self.n_cutoff = n;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |name, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::Constraint {
                    name,
                    constraint: "finite",
                    value,
                })
            }
        };
        finite("a", self.a)?;
        finite("b", self.b)?;
        for (name, value) in [("c", self.c), ("gamma", self.gamma), ("nu", self.nu), ("L", self.l)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Constraint {
                    name,
                    constraint: match name {
                        "c" => "c > 0",
                        "gamma" => "gamma > 0",
                        "nu" => "nu > 0",
                        _ => "L > 0",
                    },
                    value,
                });
            }
        }
        if self.n_cutoff == Some(0) {
            return Err(ModelError::Cutoff);
        }
        Ok(())
    }

    /// The six scalar constants in the order `a, b, c, Γ, ν, L`.
    pub fn as_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.gamma, self.nu, self.l]
    }
}

/// Order parameter field: five S₀ coefficient planes, held in both spectral
/// and physical space.
#[derive(Debug, Clone)]
pub struct QTensorField {
    spec: SpectralField,
    real: RealField,
}

impl QTensorField {
    pub fn from_spectral(spec: SpectralField) -> Self {
        assert_eq!(spec.ncomp(), 5, "Q needs five S0 coefficients");
        let real = spec.to_real();
        Self { spec, real }
    }

    /// Keeps `real` exactly as given; the spectral mirror is its transform.
    pub fn from_real(real: RealField) -> Self {
        assert_eq!(real.ncomp(), 5, "Q needs five S0 coefficients");
        let spec = real.to_spectral();
        Self { spec, real }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            spec: SpectralField::zeros(grid, 5),
            real: RealField::zeros(grid, 5),
        }
    }

    /// Samples a matrix-valued function, projecting each value onto S₀.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> Mat3 + Sync,
    {
        Self::from_real(RealField::from_fn(grid, 5, |x, y, v| {
            v.copy_from_slice(&mat_to_coeffs(&f(x, y)));
        }))
    }

    /// Spatially constant field.
    pub fn uniform(grid: &Grid, q: &Mat3) -> Self {
        let c = mat_to_coeffs(q);
        Self::from_fn(grid, |_, _| coeffs_to_mat(&c))
    }

    pub fn grid(&self) -> &Grid {
        self.spec.grid()
    }

    pub fn spectral(&self) -> &SpectralField {
        &self.spec
    }

    pub fn real(&self) -> &RealField {
        &self.real
    }

    /// Coefficients at flat index `i`.
    pub fn coeffs_at(&self, i: usize) -> [f64; 5] {
        std::array::from_fn(|c| self.real.comp(c)[i])
    }

    /// Dense matrix at flat index `i`.
    pub fn mat_at(&self, i: usize) -> Mat3 {
        coeffs_to_mat(&self.coeffs_at(i))
    }

    pub fn l2_norm(&self) -> f64 {
        self.spec.l2_norm()
    }
}

/// Planar velocity, held in both spectral and physical space.
#[derive(Debug, Clone)]
pub struct VelocityField {
    spec: SpectralField,
    real: RealField,
}

impl VelocityField {
    pub fn from_spectral(spec: SpectralField) -> Self {
        assert_eq!(spec.ncomp(), 2, "velocity needs two components");
        let real = spec.to_real();
        Self { spec, real }
    }

    /// Keeps `real` exactly as given; the spectral mirror is its transform.
    pub fn from_real(real: RealField) -> Self {
        assert_eq!(real.ncomp(), 2, "velocity needs two components");
        let spec = real.to_spectral();
        Self { spec, real }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            spec: SpectralField::zeros(grid, 2),
            real: RealField::zeros(grid, 2),
        }
    }

    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 2] + Sync,
    {
        Self::from_real(RealField::from_fn(grid, 2, |x, y, v| {
            v.copy_from_slice(&f(x, y));
        }))
    }

    /// Leray-projected, mean-zero copy.
    pub fn projected(&self) -> Self {
        let mut s = self.spec.leray_project();
        s.zero_mean();
        Self::from_spectral(s)
    }

    pub fn grid(&self) -> &Grid {
        self.spec.grid()
    }

    pub fn spectral(&self) -> &SpectralField {
        &self.spec
    }

    pub fn real(&self) -> &RealField {
        &self.real
    }

    pub fn l2_norm(&self) -> f64 {
        self.spec.l2_norm()
    }

    /// Largest spectral divergence relative to the coefficient norm.
    pub fn relative_divergence(&self) -> f64 {
        let norm = self.spec.coeff_norm();
        if norm == 0.0 {
            0.0
        } else {
            self.spec.max_divergence() / norm
        }
    }
}

/// Velocity and order parameter at time `t`.
#[derive(Debug, Clone)]
pub struct State {
    pub u: VelocityField,
    pub q: QTensorField,
    pub t: f64,
}

impl State {
    pub fn new(u: VelocityField, q: QTensorField, t: f64) -> Self {
        assert_eq!(u.grid(), q.grid(), "u and Q live on different grids");
        Self { u, q, t }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(VelocityField::zeros(grid), QTensorField::zeros(grid), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// Spectral re-sampling onto a grid of the same period.
    pub fn resample(&self, target: &Grid) -> State {
        State::new(
            VelocityField::from_spectral(self.u.spectral().resample(target)),
            QTensorField::from_spectral(self.q.spectral().resample(target)),
            self.t,
        )
    }

    /// Same state with both spectra truncated by the two-thirds rule.
    pub fn dealiased(&self) -> State {
        State::new(
            VelocityField::from_spectral(self.u.spectral().dealias()),
            QTensorField::from_spectral(self.q.spectral().dealias()),
            self.t,
        )
    }
}

/// Evaluates `f` at every grid point and returns the `M` output planes.
fn pointwise<const M: usize, F>(size: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize) -> [f64; M] + Sync,
{
    let vals: Vec<[f64; M]> = (0..size).into_par_iter().map(&f).collect();
    (0..M).map(|c| vals.iter().map(|v| v[c]).collect()).collect()
}

/// Forward transform followed by the two-thirds rule.
fn project(grid: &Grid, planes: Vec<Vec<f64>>) -> SpectralField {
    let mut s = RealField::from_comps(grid, planes).to_spectral();
    s.dealias_in_place();
    s
}

/// Applies `J_n` when a cutoff index is set.
fn cut(f: SpectralField, n_cutoff: Option<usize>) -> SpectralField {
    match n_cutoff {
        Some(n) => f.freq_cutoff(n),
        None => f,
    }
}

/// Pointwise `tr Q²` and `tr Q³`.
pub fn cubic_trace_values(q: &QTensorField) -> (RealField, RealField) {
    let planes = pointwise::<2, _>(q.grid().size(), |i| {
        let m = q.mat_at(i);
        let m2 = mat_mul(&m, &m);
        [trace(&m2), trace(&mat_mul(&m2, &m))]
    });
    let mut it = planes.into_iter();
    let tr2 = RealField::from_comps(q.grid(), vec![it.next().unwrap()]);
    let tr3 = RealField::from_comps(q.grid(), vec![it.next().unwrap()]);
    (tr2, tr3)
}

/// `D(tr Q²)` in physical space.
fn dealiased_tr2(q: &QTensorField) -> Vec<f64> {
    let grid = q.grid();
    let tr2 = pointwise::<1, _>(grid.size(), |i| {
        let c = q.coeffs_at(i);
        [c.iter().map(|v| v * v).sum()]
    });
    project(grid, tr2).to_real().into_comps().pop().unwrap()
}

/// Nonlinear part of `P(Q)` at one point given `D(tr Q²)` there.
fn bulk_nonlinear(c: &[f64; 5], tr2_dealiased: f64, p: &ModelParams) -> [f64; 5] {
    let m = coeffs_to_mat(c);
    let sq = mat_to_coeffs(&mat_mul(&m, &m));
    std::array::from_fn(|k| p.b * sq[k] - p.c * tr2_dealiased * c[k])
}

/// Spectral `P(Q)`, dealiased as described in the module docs.
fn bulk_spectral(q: &QTensorField, p: &ModelParams) -> SpectralField {
    let tr2 = dealiased_tr2(q);
    let planes = pointwise::<5, _>(q.grid().size(), |i| bulk_nonlinear(&q.coeffs_at(i), tr2[i], p));
    let mut s = project(q.grid(), planes);
    s.add_scaled(-p.a, q.spectral());
    s
}

/// Landau-de Gennes bulk force `P(Q)`, evaluated pseudo-spectrally.
pub fn bulk_potential_force(q: &QTensorField, p: &ModelParams) -> QTensorField {
    QTensorField::from_spectral(bulk_spectral(q, p))
}

/// Molecular field `H(Q) = P(Q) + LΔQ`.
pub fn molecular_field(q: &QTensorField, p: &ModelParams) -> QTensorField {
    let mut s = bulk_spectral(q, p);
    s.add_scaled(p.l, &q.spectral().laplacian());
    QTensorField::from_spectral(s)
}

/// Planes of `ω = (∂₁u₂ − ∂₂u₁)/2`.
fn rotation_plane(u: &SpectralField) -> Vec<f64> {
    let grid = u.grid();
    let w: Vec<Complex64> = (0..grid.size())
        .into_par_iter()
        .map(|i| {
            let (k1, k2) = grid.kappa_odd(i);
            (Complex64::new(0.0, k1) * u.comp(1)[i] - Complex64::new(0.0, k2) * u.comp(0)[i]) * 0.5
        })
        .collect();
    SpectralField::from_comps(grid, vec![w]).to_real().into_comps().pop().unwrap()
}

/// Corotation `ΩQ − QΩ` with `Ω` the antisymmetric velocity gradient.
pub fn corotation(q: &QTensorField, u: &VelocityField) -> QTensorField {
    assert_eq!(q.grid(), u.grid(), "fields live on different grids");
    let omega = rotation_plane(u.spectral());
    let planes = pointwise::<5, _>(q.grid().size(), |i| {
        mat_to_coeffs(&commutator(&planar_rotation(omega[i]), &q.mat_at(i)))
    });
    QTensorField::from_spectral(project(q.grid(), planes))
}

/// Transport `Σ_i u_i ∂_i f` for a field with any number of components.
pub fn advection(u: &VelocityField, f: &SpectralField) -> SpectralField {
    assert_eq!(u.grid(), f.grid(), "fields live on different grids");
    let grad = f.gradient().to_real();
    let (u1, u2) = (u.real().comp(0), u.real().comp(1));
    let planes: Vec<Vec<f64>> = (0..f.ncomp())
        .map(|c| {
            let (d1, d2) = (grad.comp(2 * c), grad.comp(2 * c + 1));
            (0..f.grid().size()).into_par_iter().map(|i| u1[i] * d1[i] + u2[i] * d2[i]).collect()
        })
        .collect();
    project(f.grid(), planes)
}

/// Planar stress entries `σ₁₁, σ₁₂, σ₂₁, σ₂₂` of `QΔQ − ΔQQ − ∇Q⊙∇Q`.
fn stress_planes(q: &QTensorField, grad_q: &RealField, lap_q: &RealField, i: usize) -> [f64; 4] {
    let qm = q.mat_at(i);
    let lm = coeffs_to_mat(&std::array::from_fn(|c| lap_q.comp(c)[i]));
    let anti = commutator(&qm, &lm);
    let mut dd = [[0.0; 2]; 2];
    for c in 0..5 {
        let d = [grad_q.comp(2 * c)[i], grad_q.comp(2 * c + 1)[i]];
        for a in 0..2 {
            for b in 0..2 {
                dd[a][b] += d[a] * d[b];
            }
        }
    }
    [
        anti[0][0] - dd[0][0],
        anti[0][1] - dd[0][1],
        anti[1][0] - dd[1][0],
        anti[1][1] - dd[1][1],
    ]
}

/// `(div σ)_j = ∂₁σ₁ⱼ + ∂₂σ₂ⱼ` from spectral stress entries `σ₁₁, σ₁₂, σ₂₁, σ₂₂`.
fn stress_divergence(sigma: &SpectralField) -> SpectralField {
    let d1 = sigma.derive(Axis::X1, 1);
    let d2 = sigma.derive(Axis::X2, 1);
    let f1: Vec<Complex64> = d1.comp(0).iter().zip(d2.comp(2)).map(|(a, b)| a + b).collect();
    let f2: Vec<Complex64> = d1.comp(1).iter().zip(d2.comp(3)).map(|(a, b)| a + b).collect();
    SpectralField::from_comps(sigma.grid(), vec![f1, f2])
}

/// Elastic forcing `L div(QΔQ − ΔQQ − ∇Q⊙∇Q)` restricted to the planar
/// components. Not projected.
pub fn elastic_stress_div(q: &QTensorField, p: &ModelParams) -> SpectralField {
    let grad_q = q.spectral().gradient().to_real();
    let lap_q = q.spectral().laplacian().to_real();
    let planes = pointwise::<4, _>(q.grid().size(), |i| stress_planes(q, &grad_q, &lap_q, i));
    stress_divergence(&project(q.grid(), planes)).scaled(p.l)
}

/// Right-hand side split for integrating-factor stepping: everything except
/// the diffusive terms `νΔu` and `ΓLΔQ`.
#[derive(Debug, Clone)]
pub struct ExplicitTerms {
    pub q: SpectralField,
    pub u: SpectralField,
}

/// Non-stiff part of the right-hand side of both equations.
pub fn explicit_terms(u: &VelocityField, q: &QTensorField, p: &ModelParams) -> ExplicitTerms {
    let grid = q.grid().clone();
    let size = grid.size();

    let cut_u = p.n_cutoff.map(|n| VelocityField::from_spectral(u.spectral().freq_cutoff(n)));
    let ut = cut_u.as_ref().unwrap_or(u);

    let grad_q = q.spectral().gradient().to_real();
    let lap_q = q.spectral().laplacian().to_real();
    let grad_u = ut.spectral().gradient().to_real();
    let tr2 = dealiased_tr2(q);

    let (u1, u2) = (ut.real().comp(0), ut.real().comp(1));
    // Q equation: −ũ·∇Q + Ω̃Q − QΩ̃ + Γ(nonlinear part of P).
    // Stress entries σ₁₁, σ₁₂, σ₂₁, σ₂₂ and the convection ũ·∇ũ.
    let planes = pointwise::<11, _>(size, |i| {
        let c = q.coeffs_at(i);
        let omega = 0.5 * (grad_u.comp(2)[i] - grad_u.comp(1)[i]);
        let rot = mat_to_coeffs(&commutator(&planar_rotation(omega), &coeffs_to_mat(&c)));
        let bulk = bulk_nonlinear(&c, tr2[i], p);
        let mut out = [0.0; 11];
        for k in 0..5 {
            let adv = u1[i] * grad_q.comp(2 * k)[i] + u2[i] * grad_q.comp(2 * k + 1)[i];
            out[k] = -adv + rot[k] + p.gamma * bulk[k];
        }
        out[5..9].copy_from_slice(&stress_planes(q, &grad_q, &lap_q, i));
        // ∇ũ planes are ∂₁ũ₁, ∂₂ũ₁, ∂₁ũ₂, ∂₂ũ₂.
        out[9] = u1[i] * grad_u.comp(0)[i] + u2[i] * grad_u.comp(1)[i];
        out[10] = u1[i] * grad_u.comp(2)[i] + u2[i] * grad_u.comp(3)[i];
        out
    });
    let all = project(&grid, planes).into_comps();
    let mut it = all.into_iter();
    let q_part: Vec<Vec<Complex64>> = it.by_ref().take(5).collect();
    let sigma: Vec<Vec<Complex64>> = it.by_ref().take(4).collect();
    let conv: Vec<Vec<Complex64>> = it.collect();

    let mut q_rhs = SpectralField::from_comps(&grid, q_part);
    q_rhs.add_scaled(-p.gamma * p.a, q.spectral());

    let mut force = stress_divergence(&SpectralField::from_comps(&grid, sigma)).scaled(p.l);
    force.add_scaled(-1.0, &SpectralField::from_comps(&grid, conv));
    let u_rhs = cut(force.leray_project(), p.n_cutoff);

    ExplicitTerms { q: q_rhs, u: u_rhs }
}

/// Full right-hand side of the Q equation.
pub fn tensor_rhs(s: &State, p: &ModelParams) -> QTensorField {
    let mut e = explicit_terms(&s.u, &s.q, p).q;
    e.add_scaled(p.gamma * p.l, &s.q.spectral().laplacian());
    QTensorField::from_spectral(e)
}

/// Full, Leray-projected, mean-zero right-hand side of the velocity equation.
pub fn velocity_rhs(s: &State, p: &ModelParams) -> VelocityField {
    let mut e = explicit_terms(&s.u, &s.q, p).u;
    e.add_scaled(p.nu, &s.u.spectral().laplacian());
    let mut e = e.leray_project();
    e.zero_mean();
    VelocityField::from_spectral(e)
}
