//! Integrating-factor RK2 time stepping, diagnostic probes, runs and twin runs.
//!
//! With `y = (û, Q̂)`, diagonal decay rates `λ = νκ²` for u and `ΓLκ²` for Q,
//! `E = e^{−λ dt}` and `N` the remaining (explicit) terms, one step is
//!
//! ```text
//! a      = E (y + dt N(y))
//! y_next = E (y + dt/2 N(y)) + dt/2 N(a)
//! ```
//!
//! followed by Leray projection, velocity mean removal and the two-thirds
//! rule. The linear bulk term `−ΓaQ` is explicit.
//!
//! The energy `E = ‖u‖² + ‖Q‖² + L‖∇Q‖²` obeys
//! `E' + D = 0` with
//! `D = 2ν‖∇u‖² + 2ΓL‖∇Q‖² + 2ΓL²‖ΔQ‖² − 2Γ⟨P(Q), Q − LΔQ⟩`; the `energy`
//! probe records both `E` and `D` so the balance can be checked afterwards.

use rayon::prelude::*;

use crate::paracalc::{self, DyadicPartition};
use crate::qtensor::{self, ModelParams, QTensorField, State, VelocityField};
use crate::random::{self, Draw, Spectrum};
use crate::spectral::SpectralField;

/// Step-size selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    Auto,
}

/// Time discretization. Only integrating-factor RK2 is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    IfRk2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub dt: TimeStep,
    /// Final time.
    pub t_end: f64,
    pub cfl: f64,
    pub scheme: Scheme,
}

impl TimeConfig {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt: TimeStep::Fixed(dt),
            t_end,
            cfl: 0.4,
            scheme: Scheme::IfRk2,
        }
    }

    pub fn auto(t_end: f64) -> Self {
        Self {
            dt: TimeStep::Auto,
            t_end,
            cfl: 0.4,
            scheme: Scheme::IfRk2,
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(StepError::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(StepError::Config(format!("cfl must lie in (0, 1), got {}", self.cfl)));
        }
        if !self.t_end.is_finite() {
            return Err(StepError::Config("t_end must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("non-finite values after step ending at t = {t}")]
    NonFinite { t: f64 },
    #[error("energy {energy:e} exceeds 1e6 times the initial energy {initial:e} at t = {t}")]
    BlowUp { t: f64, energy: f64, initial: f64 },
    #[error("invalid time configuration: {0}")]
    Config(String),
}

/// Automatic step: `cfl·h / max(1, max|u|)`, capped by
/// `1/(Γ(|a| + |b| max|Q| + c max|Q|²))`.
pub fn auto_dt(s: &State, p: &ModelParams, cfl: f64) -> f64 {
    let h = s.grid().dx();
    let umax = s.u.real().linf_norm();
    let qmax = s.q.real().linf_norm();
    let mut dt = cfl * h / umax.max(1.0);
    let rate = p.gamma * (p.a.abs() + p.b.abs() * qmax + p.c * qmax * qmax);
    if rate > 0.0 {
        dt = dt.min(1.0 / rate);
    }
    dt
}

fn decay_table(grid: &crate::spectral::Grid, rate: f64, dt: f64) -> Vec<f64> {
    (0..grid.size()).into_par_iter().map(|i| (-rate * grid.kappa_sq(i) * dt).exp()).collect()
}

/// `E (y + c₀ dt N₀) + c₁ dt N₁`, component-wise.
fn combine(y: &SpectralField, e: &[f64], n0: &SpectralField, c0: f64, n1: Option<&SpectralField>, c1: f64) -> SpectralField {
    let comps = (0..y.ncomp())
        .map(|c| {
            let (yc, a) = (y.comp(c), n0.comp(c));
            let b = n1.map(|n| n.comp(c));
            (0..yc.len())
                .into_par_iter()
                .map(|i| {
                    let v = (yc[i] + a[i] * c0) * e[i];
                    match b {
                        Some(b) => v + b[i] * c1,
                        None => v,
                    }
                })
                .collect()
        })
        .collect();
    SpectralField::from_comps(y.grid(), comps)
}

/// One integrating-factor RK2 step of size `dt`.
pub fn step_with_dt(s: &State, p: &ModelParams, dt: f64) -> Result<State, StepError> {
    let grid = s.grid();
    let eu = decay_table(grid, p.nu, dt);
    let eq = decay_table(grid, p.gamma * p.l, dt);

    let n0 = qtensor::explicit_terms(&s.u, &s.q, p);
    let au = combine(s.u.spectral(), &eu, &n0.u, dt, None, 0.0);
    let aq = combine(s.q.spectral(), &eq, &n0.q, dt, None, 0.0);
    let (au, aq) = (VelocityField::from_spectral(au), QTensorField::from_spectral(aq));
    if !(au.real().is_finite() && aq.real().is_finite()) {
        return Err(StepError::NonFinite { t: s.t + dt });
    }
    let n1 = qtensor::explicit_terms(&au, &aq, p);

    let mut u = combine(s.u.spectral(), &eu, &n0.u, 0.5 * dt, Some(&n1.u), 0.5 * dt).leray_project();
    u.zero_mean();
    u.dealias_in_place();
    let mut q = combine(s.q.spectral(), &eq, &n0.q, 0.5 * dt, Some(&n1.q), 0.5 * dt);
    q.dealias_in_place();
    if !(u.is_finite() && q.is_finite()) {
        return Err(StepError::NonFinite { t: s.t + dt });
    }
    Ok(State::new(VelocityField::from_spectral(u), QTensorField::from_spectral(q), s.t + dt))
}

/// One step with the configured step size.
pub fn step(s: &State, p: &ModelParams, tc: &TimeConfig) -> Result<State, StepError> {
    tc.validate()?;
    let dt = match tc.dt {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Auto => auto_dt(s, p, tc.cfl),
    };
    step_with_dt(s, p, dt)
}

/// `E = ‖u‖² + ‖Q‖² + L‖∇Q‖²`.
pub fn energy(s: &State, p: &ModelParams) -> f64 {
    let u2 = s.u.spectral().weighted_norm_sq(|_| 1.0);
    let q2 = s.q.spectral().weighted_norm_sq(|_| 1.0);
    let g2 = s.q.spectral().homogeneous_norm(1.0).powi(2);
    u2 + q2 + p.l * g2
}

/// `D = 2ν‖∇u‖² + 2ΓL‖∇Q‖² + 2ΓL²‖ΔQ‖² − 2Γ⟨P(Q), Q − LΔQ⟩`, with `P` the
/// same pseudo-spectral bulk force the solver uses.
pub fn energy_dissipation(s: &State, p: &ModelParams) -> f64 {
    let qs = s.q.spectral();
    let gu = s.u.spectral().homogeneous_norm(1.0).powi(2);
    let gq = qs.homogeneous_norm(1.0).powi(2);
    let lq = qs.homogeneous_norm(2.0).powi(2);
    let bulk = qtensor::bulk_potential_force(&s.q, p);
    let mut test = qs.clone();
    test.add_scaled(-p.l, &qs.laplacian());
    let pb = bulk.spectral().inner(&test);
    2.0 * p.nu * gu + 2.0 * p.gamma * p.l * gq + 2.0 * p.gamma * p.l * p.l * lq - 2.0 * p.gamma * pb
}

/// Osgood quantities at regularity `s`: `[Φ, Ψ, f₁, f₂]` with
/// `Φ = ‖u‖²_{Ḣˢ} + ‖∇Q‖²_{Ḣˢ}`, `Ψ = ‖∇u‖²_{Ḣˢ} + ‖ΔQ‖²_{Ḣˢ}`,
/// `f₁ = ‖(u, ∇Q)‖²_{L²} + 1 + ‖Q‖_{H²} + ‖Q‖²_{H²}` and
/// `f₂ = ‖(u, ∇Q)‖²_{Ḣ¹}`. Homogeneous norms use the block form.
pub fn osgood_terms(st: &State, s: f64, part: &DyadicPartition) -> [f64; 4] {
    let (u, q) = (st.u.spectral(), st.q.spectral());
    let phi = paracalc::sobolev_norm_sq(u, s, part) + paracalc::sobolev_norm_sq_deriv(q, s, 1, part);
    let psi = paracalc::sobolev_norm_sq_deriv(u, s, 1, part) + paracalc::sobolev_norm_sq_deriv(q, s, 2, part);
    let h2 = q.sobolev_norm(2.0);
    let f1 = u.weighted_norm_sq(|_| 1.0) + q.homogeneous_norm(1.0).powi(2) + 1.0 + h2 + h2 * h2;
    let f2 = paracalc::sobolev_norm_sq(u, 1.0, part) + paracalc::sobolev_norm_sq_deriv(q, 1.0, 1, part);
    [phi, psi, f1, f2]
}

/// Scalar diagnostics recorded at every step.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// `u_l2`, `q_l2`.
    L2,
    /// Homogeneous Ḣ¹ seminorms `u_h1 = ‖∇u‖`, `q_h1 = ‖∇Q‖`.
    H1,
    /// Block-form `u_hs{s} = ‖u‖_{Ḣˢ}`, `gradq_hs{s} = ‖∇Q‖_{Ḣˢ}`.
    Hs(f64),
    /// `q_l{p} = ‖Q‖_{L^p}` of the pointwise Frobenius magnitude.
    Lp(f64),
    /// `energy` and `dissipation` (see module docs).
    Energy,
    /// `osgood_phi_{s}`, `osgood_psi_{s}`, `osgood_f1_{s}`, `osgood_f2_{s}`.
    Osgood(f64),
}

impl Probe {
    pub fn columns(&self) -> Vec<String> {
        match self {
            Probe::L2 => vec!["u_l2".into(), "q_l2".into()],
            Probe::H1 => vec!["u_h1".into(), "q_h1".into()],
            Probe::Hs(s) => vec![format!("u_hs{s}"), format!("gradq_hs{s}")],
            Probe::Lp(p) => vec![format!("q_l{p}")],
            Probe::Energy => vec!["energy".into(), "dissipation".into()],
            Probe::Osgood(s) => ["phi", "psi", "f1", "f2"].iter().map(|k| format!("osgood_{k}_{s}")).collect(),
        }
    }

    /// Parses `l2`, `h1`, `hs:<s>`, `lp:<p>`, `energy` or `osgood:<s>`.
    pub fn parse(text: &str) -> Result<Probe, String> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (text.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<f64, String> {
            a.ok_or_else(|| format!("probe `{name}` needs an argument, e.g. `{name}:0.5`"))?
                .parse::<f64>()
                .map_err(|e| format!("bad probe argument in `{text}`: {e}"))
        };
        match name {
            "l2" => Ok(Probe::L2),
            "h1" => Ok(Probe::H1),
            "energy" => Ok(Probe::Energy),
            "hs" => Ok(Probe::Hs(num(arg)?)),
            "osgood" => Ok(Probe::Osgood(num(arg)?)),
            "lp" => {
                let p = num(arg)?;
                if p >= 1.0 {
                    Ok(Probe::Lp(p))
                } else {
                    Err(format!("lp exponent must be at least 1, got {p}"))
                }
            }
            _ => Err(format!("unknown probe `{text}`")),
        }
    }

    fn needs_partition(&self) -> bool {
        matches!(self, Probe::Hs(_) | Probe::Osgood(_))
    }

    fn evaluate(&self, st: &State, p: &ModelParams, part: Option<&DyadicPartition>) -> Vec<f64> {
        let (u, q) = (st.u.spectral(), st.q.spectral());
        match self {
            Probe::L2 => vec![u.l2_norm(), q.l2_norm()],
            Probe::H1 => vec![u.homogeneous_norm(1.0), q.homogeneous_norm(1.0)],
            Probe::Hs(s) => {
                let part = part.expect("partition available");
                vec![
                    paracalc::sobolev_norm_sq(u, *s, part).sqrt(),
                    paracalc::sobolev_norm_sq_deriv(q, *s, 1, part).sqrt(),
                ]
            }
            Probe::Lp(e) => vec![st.q.real().lp_norm(*e)],
            Probe::Energy => vec![energy(st, p), energy_dissipation(st, p)],
            Probe::Osgood(s) => osgood_terms(st, *s, part.expect("partition available")).to_vec(),
        }
    }
}

/// Time series of named scalar diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormSeries {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl NormSeries {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) {
        assert_eq!(row.len(), self.names.len(), "row does not match the column count");
        self.times.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// A run: parameters, stored states (initial, every `stride`-th, final) and
/// per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub states: Vec<State>,
    pub series: NormSeries,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.series.times
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: StepError,
    pub partial: Box<Trajectory>,
}

/// Step times from `t0` to `t_end`: fixed steps land on `t0 + k·dt` when
/// `dt` divides the interval, otherwise the last step is shortened.
struct Clock {
    t0: f64,
    t_end: f64,
    fixed: Option<(f64, Option<usize>)>,
    k: usize,
}

impl Clock {
    fn new(t0: f64, tc: &TimeConfig) -> Self {
        let fixed = match tc.dt {
            TimeStep::Fixed(dt) => {
                let ratio = (tc.t_end - t0) / dt;
                let exact = (ratio - ratio.round()).abs() < 1e-9 * ratio.abs().max(1.0);
                Some((dt, exact.then(|| ratio.round().max(0.0) as usize)))
            }
            TimeStep::Auto => None,
        };
        Self {
            t0,
            t_end: tc.t_end,
            fixed,
            k: 0,
        }
    }

    /// Next `(dt, t_next)`, or `None` when done.
    fn next(&mut self, t: f64, auto: impl FnOnce() -> f64) -> Option<(f64, f64)> {
        let out = match self.fixed {
            Some((dt, Some(count))) => {
                if self.k >= count {
                    return None;
                }
                let t_next = self.t0 + (self.k + 1) as f64 * dt;
                Some((t_next - t, t_next))
            }
            _ => {
                let remaining = self.t_end - t;
                if remaining <= 1e-12 * self.t_end.abs().max(1.0) {
                    return None;
                }
                let dt = match self.fixed {
                    Some((dt, _)) => dt,
                    None => auto(),
                };
                if dt >= remaining {
                    Some((remaining, self.t_end))
                } else {
                    Some((dt, t + dt))
                }
            }
        };
        self.k += 1;
        out
    }
}

fn record(series: &mut NormSeries, st: &State, p: &ModelParams, probes: &[Probe], part: Option<&DyadicPartition>) {
    let row: Vec<f64> = probes.iter().flat_map(|pr| pr.evaluate(st, p, part)).collect();
    series.push(st.t, row);
}

/// Integrates from `init` to `tc.t_end`, evaluating `probes` after every step
/// and storing every `stride`-th state plus the final one.
pub fn run(init: &State, p: &ModelParams, tc: &TimeConfig, probes: &[Probe], stride: usize) -> Result<Trajectory, RunFailure> {
    let stride = stride.max(1);
    let fail = |error, partial| RunFailure {
        error,
        partial: Box::new(partial),
    };
    let names: Vec<String> = probes.iter().flat_map(Probe::columns).collect();
    let mut traj = Trajectory {
        params: *p,
        states: vec![init.clone()],
        series: NormSeries::new(names),
    };
    if let Err(e) = tc.validate() {
        return Err(fail(e, traj));
    }
    let part = probes.iter().any(Probe::needs_partition).then(|| DyadicPartition::new(init.grid()));
    record(&mut traj.series, init, p, probes, part.as_ref());

    let e0 = energy(init, p);
    let mut clock = Clock::new(init.t, tc);
    let mut cur = init.clone();
    let mut count = 0usize;
    while let Some((dt, t_next)) = clock.next(cur.t, || auto_dt(&cur, p, tc.cfl)) {
        let mut next = match step_with_dt(&cur, p, dt) {
            Ok(s) => s,
            Err(e) => {
                if traj.states.last().map(|s| s.t) != Some(cur.t) {
                    traj.states.push(cur);
                }
                return Err(fail(e, traj));
            }
        };
        next.t = t_next;
        count += 1;
        record(&mut traj.series, &next, p, probes, part.as_ref());
        let e = energy(&next, p);
        let blown = e0 > 0.0 && e > 1e6 * e0;
        if count % stride == 0 || blown {
            traj.states.push(next.clone());
        }
        if blown {
            return Err(fail(
                StepError::BlowUp {
                    t: next.t,
                    energy: e,
                    initial: e0,
                },
                traj,
            ));
        }
        cur = next;
    }
    if traj.states.last().map(|s| s.t) != Some(cur.t) {
        traj.states.push(cur);
    }
    Ok(traj)
}

/// Centered differences in the interior, one-sided at the ends.
pub fn finite_difference(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            (y[b] - y[a]) / (t[b] - t[a])
        })
        .collect()
}

/// Seeded perturbation of size `eps`: a divergence-free velocity and a Q
/// field, each with RMS magnitude `eps` and the given band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub eps: f64,
    pub seed: u64,
    pub spectrum: Spectrum,
}

/// `init` plus the perturbation, truncated by the two-thirds rule.
pub fn perturb(init: &State, pert: &Perturbation) -> State {
    let grid = init.grid();
    let mut rng = random::rng(pert.seed);
    let du = random::random_solenoidal(grid, &pert.spectrum, Draw::Gaussian, pert.eps, &mut rng);
    let dq = random::random_field(grid, 5, &pert.spectrum, Draw::Gaussian, pert.eps, &mut rng);
    let u = init.u.spectral().add(&du).dealias();
    let q = init.q.spectral().add(&dq).dealias();
    State::new(VelocityField::from_spectral(u), QTensorField::from_spectral(q), init.t)
}

/// Norms of one member of a twin pair that enter the uniqueness majorant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolutionNorms {
    pub u_l2: f64,
    pub grad_u: f64,
    pub q_l2: f64,
    pub grad_q: f64,
    pub lap_q: f64,
}

impl SolutionNorms {
    pub fn of(s: &State) -> Self {
        let (u, q) = (s.u.spectral(), s.q.spectral());
        Self {
            u_l2: u.l2_norm(),
            grad_u: u.homogeneous_norm(1.0),
            q_l2: q.l2_norm(),
            grad_q: q.homogeneous_norm(1.0),
            lap_q: q.homogeneous_norm(2.0),
        }
    }
}

/// Difference diagnostics at one time. All `_hm` norms are block-form
/// `Ḣ^{−1/2}` norms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwinSample {
    pub t: f64,
    /// `Φ = ½‖δu‖²_{Ḣ^{−1/2}} + L‖∇δQ‖²_{Ḣ^{−1/2}}`.
    pub phi: f64,
    pub du_hm: f64,
    pub grad_dq_hm: f64,
    pub grad_du_hm: f64,
    pub lap_dq_hm: f64,
    pub grad_du_l2: f64,
    pub first: SolutionNorms,
    pub second: SolutionNorms,
}

impl TwinSample {
    fn of(a: &State, b: &State, l: f64, part: &DyadicPartition) -> Self {
        let du = a.u.spectral().sub(b.u.spectral());
        let dq = a.q.spectral().sub(b.q.spectral());
        let s = -0.5;
        let du_hm = paracalc::sobolev_norm_sq(&du, s, part).sqrt();
        let grad_dq_hm = paracalc::sobolev_norm_sq_deriv(&dq, s, 1, part).sqrt();
        Self {
            t: a.t,
            phi: 0.5 * du_hm * du_hm + l * grad_dq_hm * grad_dq_hm,
            du_hm,
            grad_dq_hm,
            grad_du_hm: paracalc::sobolev_norm_sq_deriv(&du, s, 1, part).sqrt(),
            lap_dq_hm: paracalc::sobolev_norm_sq_deriv(&dq, s, 2, part).sqrt(),
            grad_du_l2: du.homogeneous_norm(1.0),
            first: SolutionNorms::of(a),
            second: SolutionNorms::of(b),
        }
    }

    /// Column names of [`TwinSample::values`].
    pub fn columns() -> Vec<String> {
        let mut names: Vec<String> = ["phi", "du_hm", "grad_dq_hm", "grad_du_hm", "lap_dq_hm", "grad_du_l2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for tag in ["1", "2"] {
            for k in ["u_l2", "grad_u", "q_l2", "grad_q", "lap_q"] {
                names.push(format!("{k}_{tag}"));
            }
        }
        names
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.phi,
            self.du_hm,
            self.grad_dq_hm,
            self.grad_du_hm,
            self.lap_dq_hm,
            self.grad_du_l2,
        ];
        for n in [&self.first, &self.second] {
            v.extend([n.u_l2, n.grad_u, n.q_l2, n.grad_q, n.lap_q]);
        }
        v
    }

    pub fn from_values(t: f64, v: &[f64]) -> Self {
        let norms = |o: usize| SolutionNorms {
            u_l2: v[o],
            grad_u: v[o + 1],
            q_l2: v[o + 2],
            grad_q: v[o + 3],
            lap_q: v[o + 4],
        };
        Self {
            t,
            phi: v[0],
            du_hm: v[1],
            grad_dq_hm: v[2],
            grad_du_hm: v[3],
            lap_dq_hm: v[4],
            grad_du_l2: v[5],
            first: norms(6),
            second: norms(11),
        }
    }
}

/// Result of a twin run.
#[derive(Debug, Clone)]
pub struct TwinDiff {
    pub l: f64,
    pub samples: Vec<TwinSample>,
    /// Empirical rate `Φ'/Φ` where `Φ > 0`, zero elsewhere.
    pub chi: Vec<f64>,
    /// `(t, δu, δQ)` at the stored steps.
    pub snapshots: Vec<(f64, SpectralField, SpectralField)>,
}

impl TwinDiff {
    pub fn from_samples(l: f64, samples: Vec<TwinSample>, snapshots: Vec<(f64, SpectralField, SpectralField)>) -> Self {
        let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let phi: Vec<f64> = samples.iter().map(|s| s.phi).collect();
        let d = finite_difference(&t, &phi);
        let chi = phi.iter().zip(d).map(|(p, d)| if *p > 0.0 { d / p } else { 0.0 }).collect();
        Self {
            l,
            samples,
            chi,
            snapshots,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.phi).collect()
    }

    /// All sample columns plus `chi`.
    pub fn to_series(&self) -> NormSeries {
        let mut names = TwinSample::columns();
        names.push("chi".into());
        let mut ns = NormSeries::new(names);
        for (s, c) in self.samples.iter().zip(&self.chi) {
            let mut row = s.values();
            row.push(*c);
            ns.push(s.t, row);
        }
        ns
    }

    /// Rebuilds the scalar part from a series written by [`TwinDiff::to_series`].
    pub fn from_series(l: f64, ns: &NormSeries) -> Result<Self, String> {
        let cols = TwinSample::columns();
        let idx: Vec<usize> = cols
            .iter()
            .map(|c| ns.names.iter().position(|n| n == c).ok_or_else(|| format!("missing column `{c}`")))
            .collect::<Result<_, _>>()?;
        let samples = ns
            .times
            .iter()
            .zip(&ns.rows)
            .map(|(t, r)| {
                let v: Vec<f64> = idx.iter().map(|&j| r[j]).collect();
                TwinSample::from_values(*t, &v)
            })
            .collect();
        Ok(Self::from_samples(l, samples, Vec::new()))
    }
}

/// Evolves `init` and its perturbation with identical steps (the step size
/// is chosen from the unperturbed member) and records the difference.
pub fn twin_run(init: &State, pert: &Perturbation, p: &ModelParams, tc: &TimeConfig, stride: usize) -> Result<TwinDiff, StepError> {
    twin_run_pair(init, &perturb(init, pert), p, tc, stride)
}

/// Twin run from two explicit initial states.
pub fn twin_run_pair(a0: &State, b0: &State, p: &ModelParams, tc: &TimeConfig, stride: usize) -> Result<TwinDiff, StepError> {
    tc.validate()?;
    let stride = stride.max(1);
    let part = DyadicPartition::new(a0.grid());
    let mut a = a0.clone();
    let mut b = b0.clone();
    let snap = |a: &State, b: &State| (a.t, a.u.spectral().sub(b.u.spectral()), a.q.spectral().sub(b.q.spectral()));
    let mut samples = vec![TwinSample::of(&a, &b, p.l, &part)];
    let mut snapshots = vec![snap(&a, &b)];
    let mut clock = Clock::new(a.t, tc);
    let mut count = 0usize;
    while let Some((dt, t_next)) = clock.next(a.t, || auto_dt(&a, p, tc.cfl)) {
        let (na, nb) = rayon::join(|| step_with_dt(&a, p, dt), || step_with_dt(&b, p, dt));
        let (mut na, mut nb) = (na?, nb?);
        na.t = t_next;
        nb.t = t_next;
        a = na;
        b = nb;
        count += 1;
        samples.push(TwinSample::of(&a, &b, p.l, &part));
        if count % stride == 0 {
            snapshots.push(snap(&a, &b));
        }
    }
    if snapshots.last().map(|s| s.0) != Some(a.t) {
        snapshots.push(snap(&a, &b));
    }
    Ok(TwinDiff::from_samples(p.l, samples, snapshots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_parsing() {
        assert_eq!(Probe::parse("hs:0.5").unwrap(), Probe::Hs(0.5));
        assert_eq!(Probe::parse("energy").unwrap(), Probe::Energy);
        assert!(Probe::parse("lp:0.5").is_err());
        assert!(Probe::parse("hs").is_err());
        assert!(Probe::parse("bogus").is_err());
    }

    #[test]
    fn finite_difference_of_quadratic_is_exact_inside() {
        let t: Vec<f64> = (0..6).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| t * t).collect();
        let d = finite_difference(&t, &y);
        for k in 1..5 {
            assert!((d[k] - 2.0 * t[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn clock_lands_on_multiples() {
        let tc = TimeConfig::fixed(0.1, 1.0);
        let mut c = Clock::new(0.0, &tc);
        let mut t = 0.0;
        let mut n = 0;
        while let Some((_, tn)) = c.next(t, || unreachable!()) {
            t = tn;
            n += 1;
        }
        assert_eq!(n, 10);
        assert_eq!(t, 1.0);
    }
}
