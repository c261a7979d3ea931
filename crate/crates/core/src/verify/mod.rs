//! Numerical checks of the identities and estimates satisfied by the model.
//!
//! Every check produces a [`Report`] holding the measured quantities, the
//! tolerance, the verdict and any constant fitted from the data. Ratios whose
//! denominator falls below [`FLOOR`] are reported as vacuous passes.
//! Constants that are only known to exist are fitted as the smallest value
//! consistent with the data; [`baseline`] holds the values measured on the
//! reference ensembles.

pub mod baseline;
mod ensembles;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::Hasher;

use rayon::prelude::*;

pub use ensembles::*;

use crate::integrator::{self, finite_difference, TwinDiff, TwinSample, Trajectory};
use crate::paracalc::{self, DyadicPartition, ParacalcError};
use crate::qtensor::{self, commutator, mat_mul, trace, Mat3, ModelParams, QTensorField, VelocityField};
use crate::spectral::{det_sum, SpectralField};

/// Denominators below this are treated as zero.
pub const FLOOR: f64 = 1e-30;

/// Relative tolerance of the corotation/stress cancellation.
pub const CANCELLATION_TOL: f64 = 1e-8;

/// Default relative tolerance of a single energy-balance residual.
pub const ENERGY_TOL: f64 = 5e-2;

/// Relative slack when validating an inequality with a fitted constant.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no `{0}` column in the series and no stored states to recompute it from")]
    MissingData(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error(transparent)]
    Paracalc(#[from] ParacalcError),
    #[error("{0}")]
    Invalid(String),
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub check: String,
    /// Hash of the inputs, for telling apart reports on different data.
    pub digest: u64,
    pub measured: Vec<(String, f64)>,
    pub tolerance: f64,
    pub passed: bool,
    /// Passed only because every tested quantity vanished.
    pub vacuous: bool,
    pub fitted: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(check: &str, digest: u64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            digest,
            measured: Vec::new(),
            tolerance,
            passed: false,
            vacuous: false,
            fitted: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn measure(&mut self, name: &str, v: f64) {
        self.measured.push((name.to_string(), v));
    }

    pub fn fit(&mut self, name: &str, v: f64) {
        self.fitted.push((name.to_string(), v));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Looks a name up among the measured, then the fitted values.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.measured
            .iter()
            .chain(&self.fitted)
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn verdict(&self) -> &'static str {
        match (self.passed, self.vacuous) {
            (true, false) => "PASS",
            (true, true) => "PASS (vacuous)",
            (false, _) => "FAIL",
        }
    }

    pub const CSV_HEADER: &'static str = "check,digest,verdict,tolerance,kind,name,value";

    /// One CSV line per measured and fitted value.
    pub fn csv_rows(&self) -> Vec<String> {
        let head = format!("{},{:016x},{},{:e}", self.check, self.digest, self.verdict(), self.tolerance);
        let row = |kind: &str, (n, v): &(String, f64)| format!("{head},{kind},{n},{v:.16e}");
        self.measured
            .iter()
            .map(|m| row("measured", m))
            .chain(self.fitted.iter().map(|f| row("fitted", f)))
            .collect()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} (tolerance {:e}, inputs {:016x})", self.check, self.verdict(), self.tolerance, self.digest)?;
        for (n, v) in &self.measured {
            writeln!(f, "  {n} = {v:.6e}")?;
        }
        for (n, v) in &self.fitted {
            writeln!(f, "  fitted {n} = {v:.6e}")?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Order-dependent hash of input data.
#[derive(Default)]
pub struct Digest(DefaultHasher);

impl Digest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&mut self, v: f64) -> &mut Self {
        self.0.write_u64(v.to_bits());
        self
    }

    pub fn values(&mut self, v: &[f64]) -> &mut Self {
        for x in v {
            self.value(*x);
        }
        self
    }

    pub fn field(&mut self, f: &SpectralField) -> &mut Self {
        self.0.write_usize(f.grid().n());
        for c in f.comps() {
            for z in c {
                self.0.write_u64(z.re.to_bits());
                self.0.write_u64(z.im.to_bits());
            }
        }
        self
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.0.write(s.as_bytes());
        self
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }
}

fn trajectory_digest(traj: &Trajectory) -> u64 {
    let mut d = Digest::new();
    d.values(&traj.params.as_array());
    d.values(&traj.series.times);
    for r in &traj.series.rows {
        d.values(r);
    }
    if let Some(s) = traj.states.first() {
        d.field(s.u.spectral()).field(s.q.spectral());
    }
    d.finish()
}

fn twin_digest(diff: &TwinDiff) -> u64 {
    let mut d = Digest::new();
    d.value(diff.l);
    for s in &diff.samples {
        d.value(s.t).values(&s.values());
    }
    d.finish()
}

/// Cumulative trapezoid integral of `y` over `t`, starting at zero.
pub fn cumulative_integral(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    out
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Corotation/stress cancellation
// ---------------------------------------------------------------------------

/// Velocity gradient `G_ij = ∂_i u_j` at every grid point, padded to 3×3.
fn velocity_gradient(u: &VelocityField) -> Vec<Mat3> {
    let g = u.spectral().gradient().to_real();
    (0..u.grid().size())
        .into_par_iter()
        .map(|p| {
            let mut m = [[0.0; 3]; 3];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] = g.comp(2 * j + i)[p];
                }
            }
            m
        })
        .collect()
}

/// The two integrals `∫ tr{(ΩQ₂ − Q₂Ω)ΔQ₁}` and `∫ tr{(ΔQ₁Q₂ − Q₂ΔQ₁)∇u}`,
/// where `(∇u)_ij = ∂_i u_j` and `Ω = (∇u − ᵗ∇u)/2`.
pub fn cancellation_terms(q1: &QTensorField, q2: &QTensorField, u: &VelocityField) -> (f64, f64) {
    assert!(q1.grid() == q2.grid() && q1.grid() == u.grid(), "fields live on different grids");
    let lap = QTensorField::from_spectral(q1.spectral().laplacian());
    let grad = velocity_gradient(u);
    let vals: Vec<[f64; 2]> = (0..q1.grid().size())
        .into_par_iter()
        .map(|p| {
            let g = &grad[p];
            let mut omega = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    omega[i][j] = 0.5 * (g[i][j] - g[j][i]);
                }
            }
            let (l, b) = (lap.mat_at(p), q2.mat_at(p));
            let t1 = trace(&mat_mul(&commutator(&omega, &b), &l));
            let t2 = trace(&mat_mul(&commutator(&l, &b), g));
            [t1, t2]
        })
        .collect();
    let area = q1.grid().cell_area();
    let n = vals.len();
    (det_sum(n, |p| vals[p][0]) * area, det_sum(n, |p| vals[p][1]) * area)
}

/// The two terms cancel: `|sum| ≤ 10⁻⁸(|term1| + |term2| + floor)`.
pub fn cancellation_check(q1: &QTensorField, q2: &QTensorField, u: &VelocityField) -> Report {
    let digest = Digest::new()
        .field(q1.spectral())
        .field(q2.spectral())
        .field(u.spectral())
        .finish();
    let (t1, t2) = cancellation_terms(q1, q2, u);
    let mut r = Report::new("cancellation", digest, CANCELLATION_TOL);
    let sum = t1 + t2;
    let scale = t1.abs() + t2.abs();
    r.measure("term1", t1);
    r.measure("term2", t2);
    r.measure("sum", sum);
    r.measure("relative", if scale > FLOOR { sum.abs() / scale } else { 0.0 });
    r.passed = sum.abs() <= CANCELLATION_TOL * (scale + FLOOR);
    r.vacuous = scale <= FLOOR;
    r
}

/// Transport and rotation terms are orthogonal to the transported field:
/// `⟨u·∇u, u⟩`, `⟨u·∇Q, Q⟩` and `⟨ΩQ − QΩ, Q⟩`, each relative to the
/// product of the norms of its two factors.
pub fn transport_check(u: &VelocityField, q: &QTensorField, tol: f64) -> Report {
    let digest = Digest::new().field(u.spectral()).field(q.spectral()).finish();
    let conv = qtensor::advection(u, u.spectral());
    let adv = qtensor::advection(u, q.spectral());
    let rot = qtensor::corotation(q, u);
    let mut r = Report::new("transport", digest, tol);
    let mut ok = true;
    let mut vacuous = true;
    let pairs = [
        ("convection", &conv, u.spectral()),
        ("advection", &adv, q.spectral()),
        ("corotation", rot.spectral(), q.spectral()),
    ];
    for (name, a, b) in pairs {
        let ip = a.inner(b);
        let scale = a.l2_norm() * b.l2_norm();
        let rel = if scale > FLOOR { ip.abs() / scale } else { 0.0 };
        r.measure(name, rel);
        ok &= rel <= tol;
        vacuous &= scale <= FLOOR;
    }
    r.passed = ok;
    r.vacuous = vacuous;
    r
}

// ---------------------------------------------------------------------------
// Energy balance
// ---------------------------------------------------------------------------

/// Times, energy and dissipation of a trajectory, taken from the `energy`
/// probe when present and recomputed from the stored states otherwise.
pub fn energy_series(traj: &Trajectory, p: &ModelParams) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), VerifyError> {
    let ns = &traj.series;
    let (t, e, d) = match (ns.column("energy"), ns.column("dissipation")) {
        (Some(e), Some(d)) => (ns.times.clone(), e, d),
        _ => {
            if traj.states.len() < 3 {
                return Err(VerifyError::MissingData("energy".into()));
            }
            let t = traj.states.iter().map(|s| s.t).collect();
            let e = traj.states.iter().map(|s| integrator::energy(s, p)).collect();
            let d = traj.states.iter().map(|s| integrator::energy_dissipation(s, p)).collect();
            (t, e, d)
        }
    };
    if t.len() < 3 {
        return Err(VerifyError::TooFewSamples { needed: 3, got: t.len() });
    }
    Ok((t, e, d))
}

/// Per-sample residual `E' + D`.
pub fn energy_residuals(t: &[f64], e: &[f64], d: &[f64]) -> Vec<f64> {
    finite_difference(t, e).iter().zip(d).map(|(de, d)| de + d).collect()
}

struct Balance {
    interior: f64,
    endpoint: f64,
    scale: f64,
    step: f64,
}

fn balance(traj: &Trajectory, p: &ModelParams) -> Result<Balance, VerifyError> {
    let (t, e, d) = energy_series(traj, p)?;
    let r = energy_residuals(&t, &e, &d);
    let de = finite_difference(&t, &e);
    let n = r.len();
    let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(Balance {
        interior: max_of(r[1..n - 1].iter().map(|v| v.abs())),
        endpoint: r[0].abs().max(r[n - 1].abs()),
        scale: max_of(d.iter().chain(&de).map(|v| v.abs())),
        step: max_of(steps),
    })
}

/// Residual of `d/dt(‖u‖² + ‖Q‖² + L‖∇Q‖²) + D = 0` on one trajectory,
/// judged relative to the size of the dissipation. Interior samples use
/// centered differences and carry the scheme's order; the two endpoint
/// samples are one-sided and reported separately.
pub fn energy_balance_check(traj: &Trajectory, p: &ModelParams, tol: f64) -> Result<Report, VerifyError> {
    let b = balance(traj, p)?;
    let mut r = Report::new("energy-balance", trajectory_digest(traj), tol);
    r.measure("max_residual", b.interior);
    r.measure("endpoint_residual", b.endpoint);
    r.measure("scale", b.scale);
    r.measure("max_step", b.step);
    if b.scale <= FLOOR {
        r.vacuous = true;
        r.passed = b.interior <= FLOOR;
    } else {
        let rel = b.interior / b.scale;
        r.measure("relative", rel);
        r.passed = rel <= tol;
    }
    Ok(r)
}

/// Convergence order of the energy residual over runs of the same problem
/// with decreasing steps. Passes when every successive order is at least
/// `min_order`.
pub fn energy_convergence_check(trajs: &[&Trajectory], p: &ModelParams, min_order: f64) -> Result<Report, VerifyError> {
    if trajs.len() < 2 {
        return Err(VerifyError::TooFewSamples { needed: 2, got: trajs.len() });
    }
    let mut d = Digest::new();
    for t in trajs {
        d.value(trajectory_digest(t) as f64);
    }
    let mut r = Report::new("energy-convergence", d.finish(), min_order);
    let bs: Vec<Balance> = trajs.iter().map(|t| balance(t, p)).collect::<Result<_, _>>()?;
    for (k, b) in bs.iter().enumerate() {
        r.measure(&format!("dt{k}"), b.step);
        r.measure(&format!("residual{k}"), b.interior);
    }
    let mut ok = true;
    let mut vacuous = false;
    for (k, w) in bs.windows(2).enumerate() {
        if w[1].interior <= FLOOR {
            vacuous = true;
            continue;
        }
        let order = (w[0].interior / w[1].interior).ln() / (w[0].step / w[1].step).ln();
        r.measure(&format!("order{k}"), order);
        ok &= order >= min_order;
    }
    r.passed = ok;
    r.vacuous = vacuous;
    Ok(r)
}

// ---------------------------------------------------------------------------
// L^{2p} growth bound
// ---------------------------------------------------------------------------

/// `‖Q(t)‖_{L^{2p}} ≤ ‖Q₀‖_{H¹} e^{Ct}`. Without `fixed`, fits the smallest
/// `C ≥ 0` and passes when the bound holds at `t = 0` and `C` is finite.
/// With `fixed`, passes when the bound holds at every sample with that `C`.
pub fn lp_bound_check(traj: &Trajectory, p_exp: f64, fixed: Option<f64>) -> Result<Report, VerifyError> {
    if !(p_exp >= 1.0) {
        return Err(VerifyError::Invalid(format!("exponent must be at least 1, got {p_exp}")));
    }
    let q_exp = 2.0 * p_exp;
    let col = format!("q_l{q_exp}");
    let (t, lq) = match traj.series.column(&col) {
        Some(v) => (traj.series.times.clone(), v),
        None => {
            if traj.states.is_empty() {
                return Err(VerifyError::MissingData(col));
            }
            let t = traj.states.iter().map(|s| s.t).collect();
            let v = traj.states.iter().map(|s| s.q.real().lp_norm(q_exp)).collect();
            (t, v)
        }
    };
    let q0 = traj.states.first().ok_or_else(|| VerifyError::MissingData("initial state".into()))?;
    let h1 = q0.q.spectral().sobolev_norm(1.0);
    let t0 = t[0];

    let mut r = Report::new(&format!("lp-bound-{q_exp}"), trajectory_digest(traj), SLACK);
    r.measure("q0_h1", h1);
    r.measure("q0_lp", lq[0]);
    r.measure("max_lp", max_of(lq.iter().copied()));

    if h1 <= FLOOR {
        r.vacuous = true;
        r.passed = lq.iter().all(|v| *v <= FLOOR);
        return Ok(r);
    }

    // Least-squares line through the log series.
    let pts: Vec<(f64, f64)> = t.iter().zip(&lq).filter(|(_, v)| **v > 0.0).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let slope = if stt > 0.0 { sty / stt } else { 0.0 };
        let resid = max_of(pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).abs()));
        r.measure("log_slope", slope);
        r.measure("fit_residual", resid);
    }

    let start_ok = lq[0] <= h1 * (1.0 + SLACK);
    match fixed {
        None => {
            let c = t
                .iter()
                .zip(&lq)
                .filter(|(tk, _)| **tk > t0)
                .map(|(tk, v)| (v.ln() - h1.ln()) / (tk - t0))
                .fold(0.0, f64::max);
            r.fit("c", c);
            r.passed = start_ok && c.is_finite();
        }
        Some(c) => {
            r.fit("c", c);
            let worst = t
                .iter()
                .zip(&lq)
                .map(|(tk, v)| v / (h1 * (c * (tk - t0)).exp()))
                .fold(0.0, f64::max);
            r.measure("worst_ratio", worst);
            r.passed = worst <= 1.0 + SLACK;
        }
    }
    if !start_ok {
        r.note("bound fails at the initial time");
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// L^∞ interpolation
// ---------------------------------------------------------------------------

/// `[‖f‖_{L^∞}, ‖f‖_{L²}, ‖f‖_{H¹}, ‖f‖_{Ḣ^{1+s}}]`, the last in block form.
pub fn linf_interp_norms(f: &SpectralField, s: f64, part: &DyadicPartition) -> [f64; 4] {
    [
        f.to_real().linf_norm(),
        f.l2_norm(),
        f.sobolev_norm(1.0),
        paracalc::sobolev_norm_sq(f, 1.0 + s, part).sqrt(),
    ]
}

/// Right-hand side `‖f‖_{L²} + √N‖f‖_{H¹} + 2^{−Ns}‖f‖_{Ḣ^{1+s}}` without the constant.
pub fn linf_interp_rhs(norms: &[f64; 4], s: f64, n: u32) -> f64 {
    norms[1] + (n as f64).sqrt() * norms[2] + (-(n as f64) * s).exp2() * norms[3]
}

/// `‖f‖_{L^∞} ≤ C(‖f‖_{L²} + √N‖f‖_{H¹} + 2^{−Ns}‖f‖_{Ḣ^{1+s}})` over the
/// given `N`. Fits the smallest `C`; with `bound`, also requires `C ≤ bound`.
pub fn linf_interp_check(
    f: &SpectralField,
    s: f64,
    n_range: &[u32],
    part: &DyadicPartition,
    bound: Option<f64>,
) -> Result<Report, VerifyError> {
    if !(s > 0.0) {
        return Err(VerifyError::Invalid(format!("index must be positive, got {s}")));
    }
    let norms = linf_interp_norms(f, s, part);
    let digest = Digest::new().field(f).value(s).finish();
    let mut r = Report::new("linf-interp", digest, bound.unwrap_or(f64::INFINITY));
    r.measure("linf", norms[0]);
    r.measure("l2", norms[1]);
    r.measure("h1", norms[2]);
    r.measure("hdot_1s", norms[3]);
    let mut c: f64 = 0.0;
    let mut vacuous = true;
    for &n in n_range {
        let rhs = linf_interp_rhs(&norms, s, n);
        if rhs > FLOOR {
            vacuous = false;
            c = c.max(norms[0] / rhs);
        } else if norms[0] > FLOOR {
            c = f64::INFINITY;
        }
    }
    r.fit("c", c);
    r.vacuous = vacuous;
    r.passed = c.is_finite() && bound.is_none_or(|b| c <= b);
    Ok(r)
}

// ---------------------------------------------------------------------------
// Bulk force estimate
// ---------------------------------------------------------------------------

/// `(|⟨P(Q), ΔQ⟩_{Ḣˢ}|, (1 + ‖Q‖_{H²} + ‖Q‖²_{H²})‖∇Q‖²_{Ḣˢ})`.
pub fn force_estimate_terms(q: &QTensorField, s: f64, p: &ModelParams, part: &DyadicPartition) -> (f64, f64) {
    let force = qtensor::bulk_potential_force(q, p);
    let lap = q.spectral().laplacian();
    let lhs = paracalc::sobolev_inner(force.spectral(), &lap, s, part).abs();
    let h2 = q.spectral().sobolev_norm(2.0);
    let rhs = (1.0 + h2 + h2 * h2) * paracalc::sobolev_norm_sq_deriv(q.spectral(), s, 1, part);
    (lhs, rhs)
}

/// Ratio of the two sides of the bulk force estimate; with `bound`, passes
/// when the ratio does not exceed it.
pub fn force_estimate_check(
    q: &QTensorField,
    s: f64,
    p: &ModelParams,
    part: &DyadicPartition,
    bound: Option<f64>,
) -> Result<Report, VerifyError> {
    if !(s > 0.0) {
        return Err(VerifyError::Invalid(format!("index must be positive, got {s}")));
    }
    let (lhs, rhs) = force_estimate_terms(q, s, p, part);
    let digest = Digest::new().field(q.spectral()).value(s).values(&p.as_array()).finish();
    let mut r = Report::new("force-estimate", digest, bound.unwrap_or(f64::INFINITY));
    r.measure("lhs", lhs);
    r.measure("rhs", rhs);
    if rhs <= FLOOR {
        r.vacuous = true;
        r.passed = lhs <= FLOOR;
        if !r.passed {
            r.note("left side nonzero while right side vanishes");
        }
        return Ok(r);
    }
    let ratio = lhs / rhs;
    r.measure("ratio", ratio);
    r.passed = ratio.is_finite() && bound.is_none_or(|b| ratio <= b);
    Ok(r)
}

// ---------------------------------------------------------------------------
// Osgood inequality
// ---------------------------------------------------------------------------

/// Osgood series of a trajectory and the fitted constant.
#[derive(Debug, Clone)]
pub struct OsgoodDiagnostics {
    pub s: f64,
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    /// Finite-difference `Φ'`.
    pub dphi: Vec<f64>,
    pub c: f64,
    /// `Φ' + Ψ ≤ C(f₁ + f₂)Φ log₂(2 + 4C + Φ)` at each sample.
    pub inequality: Vec<bool>,
    /// `2 + 4C + Φ(t) ≤ (2 + 4C + Φ(0))^{exp((C/ln 2)∫(f₁+f₂))}` at each sample.
    pub envelope: Vec<bool>,
    pub report: Report,
}

fn osgood_rhs(c: f64, f: f64, phi: f64) -> f64 {
    c * f * phi * (2.0 + 4.0 * c + phi).log2()
}

/// Smallest `C ≥ 0` with `lhs ≤ C f Φ log₂(2 + 4C + Φ)`; the right side is
/// increasing in `C`.
fn minimal_osgood_constant(lhs: f64, f: f64, phi: f64) -> f64 {
    if lhs <= 0.0 {
        return 0.0;
    }
    if f * phi <= 0.0 {
        return f64::INFINITY;
    }
    let mut hi = 1.0;
    while osgood_rhs(hi, f, phi) < lhs {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if osgood_rhs(mid, f, phi) < lhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn osgood_series(traj: &Trajectory, s: f64) -> Result<[Vec<f64>; 5], VerifyError> {
    let ns = &traj.series;
    let cols: Vec<Option<Vec<f64>>> = ["phi", "psi", "f1", "f2"]
        .iter()
        .map(|k| ns.column(&format!("osgood_{k}_{s}")))
        .collect();
    if cols.iter().all(Option::is_some) {
        let mut it = cols.into_iter().map(Option::unwrap);
        let mut next = || it.next().unwrap();
        return Ok([ns.times.clone(), next(), next(), next(), next()]);
    }
    if traj.states.len() < 3 {
        return Err(VerifyError::MissingData(format!("osgood_phi_{s}")));
    }
    let part = DyadicPartition::new(traj.states[0].grid());
    let rows: Vec<[f64; 4]> = traj
        .states
        .par_iter()
        .map(|st| integrator::osgood_terms(st, s, &part))
        .collect();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    Ok([traj.states.iter().map(|st| st.t).collect(), col(0), col(1), col(2), col(3)])
}

/// Fits the Osgood constant on a trajectory (or checks a given one) and
/// verifies the integrated envelope with the same constant.
pub fn osgood_check(traj: &Trajectory, s: f64, fixed: Option<f64>) -> Result<OsgoodDiagnostics, VerifyError> {
    if !(s > 0.0) {
        return Err(VerifyError::Invalid(format!("index must be positive, got {s}")));
    }
    let [times, phi, psi, f1, f2] = osgood_series(traj, s)?;
    if times.len() < 3 {
        return Err(VerifyError::TooFewSamples { needed: 3, got: times.len() });
    }
    let dphi = finite_difference(&times, &phi);
    let f: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
    let lhs: Vec<f64> = dphi.iter().zip(&psi).map(|(d, p)| d + p).collect();

    let fitted = (0..times.len())
        .map(|k| minimal_osgood_constant(lhs[k], f[k], phi[k]))
        .fold(0.0, f64::max);
    let c = fixed.unwrap_or(fitted);

    let inequality: Vec<bool> = (0..times.len())
        .map(|k| lhs[k] <= osgood_rhs(c, f[k], phi[k]) * (1.0 + SLACK) + FLOOR)
        .collect();
    let integral = cumulative_integral(&times, &f);
    let base = (2.0 + 4.0 * c + phi[0]).ln();
    let envelope: Vec<bool> = (0..times.len())
        .map(|k| {
            let bound = base * (c / std::f64::consts::LN_2 * integral[k]).exp();
            (2.0 + 4.0 * c + phi[k]).ln() <= bound * (1.0 + SLACK)
        })
        .collect();

    let mut r = Report::new(&format!("osgood-{s}"), trajectory_digest(traj), SLACK);
    r.measure("phi0", phi[0]);
    r.measure("max_phi", max_of(phi.iter().copied()));
    r.measure("max_psi", max_of(psi.iter().copied()));
    r.measure("integral_f", *integral.last().unwrap());
    r.measure("inequality_failures", inequality.iter().filter(|b| !**b).count() as f64);
    r.measure("envelope_failures", envelope.iter().filter(|b| !**b).count() as f64);
    r.fit("c", c);
    if fixed.is_some() {
        r.measure("minimal_c", fitted);
    }
    r.vacuous = phi.iter().chain(&psi).all(|v| *v <= FLOOR);
    r.passed = c.is_finite() && inequality.iter().all(|b| *b) && envelope.iter().all(|b| *b);
    Ok(OsgoodDiagnostics {
        s,
        times,
        phi,
        psi,
        f1,
        f2,
        dphi,
        c,
        inequality,
        envelope,
        report: r,
    })
}

// ---------------------------------------------------------------------------
// Uniqueness functional
// ---------------------------------------------------------------------------

/// Majorant rate for the growth of the difference functional, assembled
/// from the solution norms of both members:
///
/// ```text
/// χ = ‖(Q₁,Q₂)‖² + ‖(Q₁,Q₂)‖²‖∇(Q₁,Q₂)‖² + ‖∇Q₁‖^{2/3}‖ΔQ₁‖² + ‖∇Q₂‖^{2/3}‖ΔQ₂‖²
///   + ‖u₂‖^{2/3}‖∇u₂‖² + ‖∇(u₁,u₂)‖² + ‖Δ(Q₁,Q₂)‖² + ‖∇Q₂‖²‖ΔQ₂‖²
/// ```
///
/// All norms are L² norms of the respective member.
pub fn chi_model(s: &TwinSample) -> f64 {
    let (a, b) = (&s.first, &s.second);
    let q = a.q_l2.powi(2) + b.q_l2.powi(2);
    let gq = a.grad_q.powi(2) + b.grad_q.powi(2);
    let gu = a.grad_u.powi(2) + b.grad_u.powi(2);
    let lq = a.lap_q.powi(2) + b.lap_q.powi(2);
    q + q * gq
        + a.grad_q.powf(2.0 / 3.0) * a.lap_q.powi(2)
        + b.grad_q.powf(2.0 / 3.0) * b.lap_q.powi(2)
        + b.u_l2.powf(2.0 / 3.0) * b.grad_u.powi(2)
        + gu
        + lq
        + b.grad_q.powi(2) * b.lap_q.powi(2)
}

/// Smallest `C ≥ 0` with `Φ(t) ≤ Φ(0) exp(C∫χ_model)` on one twin run.
pub fn uniqueness_constant(diff: &TwinDiff) -> f64 {
    let t = diff.times();
    let phi = diff.phi();
    let chi: Vec<f64> = diff.samples.iter().map(chi_model).collect();
    let integral = cumulative_integral(&t, &chi);
    let p0 = phi[0];
    let mut c: f64 = 0.0;
    for k in 1..phi.len() {
        if phi[k] <= p0 {
            continue;
        }
        if p0 <= 0.0 || integral[k] <= 0.0 {
            return f64::INFINITY;
        }
        c = c.max((phi[k] / p0).ln() / integral[k]);
    }
    c
}

/// Largest [`uniqueness_constant`] over several runs.
pub fn fit_uniqueness_constant(diffs: &[&TwinDiff]) -> f64 {
    diffs.iter().map(|d| uniqueness_constant(d)).fold(0.0, f64::max)
}

/// Gronwall envelope `Φ(t) ≤ Φ(0) exp(C∫χ_model)`, with `C` fitted on this
/// run or given. Identical data (`Φ ≡ 0`) passes vacuously.
pub fn uniqueness_check(diff: &TwinDiff, fixed: Option<f64>) -> Report {
    let t = diff.times();
    let phi = diff.phi();
    let chi: Vec<f64> = diff.samples.iter().map(chi_model).collect();
    let integral = cumulative_integral(&t, &chi);
    let mut r = Report::new("uniqueness", twin_digest(diff), SLACK);
    r.measure("phi0", phi.first().copied().unwrap_or(0.0));
    r.measure("max_phi", max_of(phi.iter().copied()));
    r.measure("final_phi", phi.last().copied().unwrap_or(0.0));
    r.measure("integral_chi", integral.last().copied().unwrap_or(0.0));
    r.measure("max_empirical_rate", max_of(diff.chi.iter().copied()));
    if phi.iter().all(|v| *v == 0.0) {
        r.vacuous = true;
        r.passed = true;
        r.note("identical data: the difference vanishes");
        return r;
    }
    let minimal = uniqueness_constant(diff);
    let c = fixed.unwrap_or(minimal);
    r.fit("c", c);
    if fixed.is_some() {
        r.measure("minimal_c", minimal);
    }
    let worst = phi
        .iter()
        .zip(&integral)
        .map(|(p, i)| {
            let bound = phi[0] * (c * i).exp();
            if bound > 0.0 {
                p / bound
            } else if *p > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    r.measure("worst_ratio", worst);
    r.passed = c.is_finite() && worst <= 1.0 + SLACK;
    r
}

/// Time suprema of `‖δu‖_{Ḣ^{−1/2}}` and `‖∇δQ‖_{Ḣ^{−1/2}}` and the fitted
/// constant of `‖∇δu‖_{Ḣ^{−1/2}} ≤ C(‖δu‖_{Ḣ^{−1/2}} + ‖∇δu‖_{L²})`.
pub fn difference_regularity_check(diff: &TwinDiff) -> Report {
    let s = &diff.samples;
    let mut r = Report::new("difference-regularity", twin_digest(diff), f64::INFINITY);
    let sup_du = max_of(s.iter().map(|x| x.du_hm));
    let sup_dq = max_of(s.iter().map(|x| x.grad_dq_hm));
    r.measure("sup_du_hm", sup_du);
    r.measure("sup_grad_dq_hm", sup_dq);
    let mut c: f64 = 0.0;
    let mut vacuous = true;
    for x in s {
        let den = x.du_hm + x.grad_du_l2;
        if den > FLOOR {
            vacuous = false;
            c = c.max(x.grad_du_hm / den);
        } else if x.grad_du_hm > FLOOR {
            c = f64::INFINITY;
        }
    }
    r.fit("c", c);
    r.vacuous = vacuous && sup_dq <= FLOOR;
    r.passed = sup_du.is_finite() && sup_dq.is_finite() && c.is_finite();
    r
}
