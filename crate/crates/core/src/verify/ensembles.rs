//! Seeded random ensembles for the lemma-level checks.
//!
//! Unless stated otherwise, inputs are band-limited to `|k| < n/4` so that
//! every pointwise product is free of aliasing.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{baseline, cancellation_check, force_estimate_check, linf_interp_check, transport_check, Digest, Report, VerifyError, FLOOR};
use crate::paracalc::{self, DyadicPartition, MatField, NormSpec, SymDecomp};
use crate::qtensor::{coeffs_to_mat, mat_mul, trace, ModelParams, QTensorField, VelocityField};
use crate::random::{self, Draw, Spectrum};
use crate::spectral::{Grid, RealField, SpectralField};

/// Relative tolerance of exact reconstructions.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Relative tolerance of the transport orthogonality relations.
pub const TRANSPORT_TOL: f64 = 1e-10;

/// Names accepted by [`run_lemma`].
pub const LEMMAS: &[&str] = &[
    "partition",
    "bony",
    "sym-decomp",
    "cancellation",
    "transport",
    "product",
    "commutator",
    "neg-index",
    "linf-interp",
    "force",
    "cubic-trace",
];

/// Grid size, sample count and seed of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ensemble {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(n: usize, trials: usize, seed: u64) -> Self {
        Self { n, trials, seed }
    }

    fn grid(&self) -> Grid {
        Grid::standard(self.n).expect("ensemble grid size")
    }

    fn digest(&self, tag: &str) -> u64 {
        Digest::new()
            .text(tag)
            .value(self.n as f64)
            .value(self.trials as f64)
            .value(self.seed as f64)
            .finish()
    }

    /// Independent generator for sample `k`.
    fn rng(&self, k: usize) -> rand_chacha::ChaCha8Rng {
        random::rng(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64))
    }
}

/// Band `1 ≤ |k| < n/4` with a `|k|⁻¹` envelope.
pub fn unaliased_band(n: usize) -> Spectrum {
    Spectrum::new(1.0, (n / 4 - 1) as f64, 1.0)
}

/// Band `1 ≤ |k| ≤ n/3`, untouched by the two-thirds rule.
pub fn resolved_band(n: usize) -> Spectrum {
    Spectrum::new(1.0, (n / 3) as f64, 1.0)
}

fn set_mean(f: &mut SpectralField, c: usize, mean: f64) {
    let size = f.grid().size() as f64;
    f.comp_mut(c)[0] = Complex64::new(mean * size, 0.0);
}

fn pointwise_product(f: &RealField, g: &RealField) -> RealField {
    let v = f.comp(0).iter().zip(g.comp(0)).map(|(a, b)| a * b).collect();
    RealField::from_comps(f.grid(), vec![v])
}

fn summarize(tag: &str, e: &Ensemble, tol: f64, values: &[f64], name: &str) -> Report {
    let mut r = Report::new(tag, e.digest(tag), tol);
    let max = values.iter().copied().fold(0.0, f64::max);
    r.measure("samples", values.len() as f64);
    r.measure(name, max);
    r.passed = max <= tol && values.iter().all(|v| v.is_finite());
    r
}

/// `max |Σ_q φ_q − 1|` over the non-zero lattice modes.
pub fn partition_check(n: usize) -> Report {
    let part = DyadicPartition::new(&Grid::standard(n).expect("grid size"));
    let mut r = Report::new("partition", Digest::new().value(n as f64).finish(), 1e-12);
    let d = part.partition_defect();
    r.measure("defect", d);
    r.measure("q_min", part.q_min() as f64);
    r.measure("q_max", part.q_max() as f64);
    r.passed = d <= 1e-12;
    r
}

/// Relative L² error of `Ṫ_f g + Ṫ_g f + Ṙ(f, g) + mean terms` against `fg`
/// for random scalar pairs with random means.
pub fn bony_ensemble(e: &Ensemble) -> Report {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let band = unaliased_band(e.n);
    let errors: Vec<f64> = (0..e.trials)
        .map(|k| {
            let mut rng = e.rng(k);
            let mut f = random::random_field(&grid, 1, &band, Draw::Gaussian, 1.0, &mut rng);
            let mut g = random::random_field(&grid, 1, &band, Draw::Gaussian, 1.0, &mut rng);
            set_mean(&mut f, 0, rng.random_range(-1.0..1.0));
            set_mean(&mut g, 0, rng.random_range(-1.0..1.0));
            let exact = pointwise_product(&f.to_real(), &g.to_real());
            let total = paracalc::bony(&f, &g, &part).total();
            total.sub(&exact).l2_norm() / exact.l2_norm().max(FLOOR)
        })
        .collect();
    summarize("bony", e, RECONSTRUCTION_TOL, &errors, "max_relative_error")
}

/// Relative error of `𝒥¹_q + 𝒥²_q + 𝒥³_q + 𝒥⁴_q` against `Δ̇_q(AB)` for
/// random `dim × dim` matrix pairs, maximized over blocks and measured
/// against `‖AB‖_{L²}`.
pub fn sym_decomp_ensemble(e: &Ensemble, dim: usize) -> Report {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let band = unaliased_band(e.n);
    let errors: Vec<f64> = (0..e.trials)
        .map(|k| {
            let mut rng = e.rng(k);
            let a = MatField::random(&grid, dim, &band, Draw::Gaussian, 1.0, &mut rng);
            let b = MatField::random(&grid, dim, &band, Draw::Gaussian, 1.0, &mut rng);
            let product = paracalc::mean_free_product(&a, &b);
            let scale = product.l2_norm().max(FLOOR);
            let dec = SymDecomp::new(&a, &b, &part).expect("matching shapes");
            part.blocks()
                .map(|q| {
                    let pieces = dec.pieces(q).expect("resolved block");
                    let mut sum = pieces[0].clone();
                    for p in &pieces[1..] {
                        sum = add(&sum, p);
                    }
                    sum.sub(&dec.reference(q, &product)).l2_norm() / scale
                })
                .fold(0.0, f64::max)
        })
        .collect();
    summarize("sym-decomp", e, RECONSTRUCTION_TOL, &errors, "max_relative_error")
}

fn add(a: &RealField, b: &RealField) -> RealField {
    let comps = a.comps().iter().zip(b.comps()).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect();
    RealField::from_comps(a.grid(), comps)
}

fn random_q(grid: &Grid, band: &Spectrum, draw: Draw, rms: f64, rng: &mut impl Rng) -> QTensorField {
    QTensorField::from_spectral(random::random_field(grid, 5, band, draw, rms, rng))
}

fn random_u(grid: &Grid, band: &Spectrum, rms: f64, rng: &mut impl Rng) -> VelocityField {
    VelocityField::from_spectral(random::random_solenoidal(grid, band, Draw::Gaussian, rms, rng))
}

/// [`cancellation_check`] on random triples `(Q₁, Q₂, u)`.
pub fn cancellation_ensemble(e: &Ensemble) -> Report {
    let grid = e.grid();
    let band = resolved_band(e.n);
    let reports: Vec<Report> = (0..e.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = e.rng(k);
            let q1 = random_q(&grid, &band, Draw::Gaussian, 1.0, &mut rng);
            let q2 = random_q(&grid, &band, Draw::Gaussian, 1.0, &mut rng);
            let u = random_u(&grid, &band, 1.0, &mut rng);
            cancellation_check(&q1, &q2, &u)
        })
        .collect();
    let rel: Vec<f64> = reports.iter().map(|r| r.get("relative").unwrap_or(0.0)).collect();
    let mut r = summarize("cancellation", e, super::CANCELLATION_TOL, &rel, "max_relative");
    r.measure("failures", reports.iter().filter(|r| !r.passed).count() as f64);
    r.passed &= reports.iter().all(|r| r.passed);
    r
}

/// [`transport_check`] on random divergence-free velocities and Q fields.
pub fn transport_ensemble(e: &Ensemble) -> Report {
    let grid = e.grid();
    let band = unaliased_band(e.n);
    let reports: Vec<Report> = (0..e.trials)
        .map(|k| {
            let mut rng = e.rng(k);
            let u = random_u(&grid, &band, 1.0, &mut rng);
            let q = random_q(&grid, &band, Draw::Gaussian, 1.0, &mut rng);
            transport_check(&u, &q, TRANSPORT_TOL)
        })
        .collect();
    let mut r = Report::new("transport", e.digest("transport"), TRANSPORT_TOL);
    for name in ["convection", "advection", "corotation"] {
        let worst = reports.iter().map(|x| x.get(name).unwrap_or(0.0)).fold(0.0, f64::max);
        r.measure(&format!("max_{name}"), worst);
    }
    r.passed = reports.iter().all(|x| x.passed);
    r
}

/// Flat envelope used by the product-law sampler.
pub fn product_band(n: usize) -> Spectrum {
    Spectrum::new(1.0, (n / 4 - 1) as f64, 0.0)
}

/// Maximum of `‖ab‖_{Ḣ^{s+t−1}} / (‖a‖_{Ḣˢ}‖b‖_{Ḣᵗ})` over random-phase pairs.
/// Fails with an error outside the admissible `(s, t)` range. With `bound`,
/// passes when the maximum does not exceed it.
pub fn product_ensemble(e: &Ensemble, s: f64, t: f64, bound: Option<f64>) -> Result<Report, VerifyError> {
    let part = DyadicPartition::new(&e.grid());
    let stats = paracalc::product_estimate_sample(s, t, e.trials, e.seed, &product_band(e.n), &part)?;
    let tag = format!("product-{s}-{t}");
    let mut r = Report::new(&tag, e.digest(&tag), bound.unwrap_or(f64::INFINITY));
    r.measure("mean_ratio", stats.mean);
    r.measure("max_ratio", stats.max);
    r.fit("c", stats.max);
    r.passed = stats.max.is_finite() && bound.is_none_or(|b| stats.max <= b);
    Ok(r)
}

/// Largest commutator ratio over random matrix pairs and block pairs
/// `|q − q'| ≤ 2`.
pub fn commutator_ensemble(e: &Ensemble) -> Result<Report, VerifyError> {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let band = unaliased_band(e.n);
    let mut worst: f64 = 0.0;
    for k in 0..e.trials {
        let mut rng = e.rng(k);
        let a = MatField::random(&grid, 3, &band, Draw::Gaussian, 1.0, &mut rng);
        let b = MatField::random(&grid, 3, &band, Draw::Gaussian, 1.0, &mut rng);
        for q in part.blocks() {
            for q2 in part.blocks().filter(|q2| (q - q2).abs() <= 2) {
                if let Some(v) = paracalc::commutator_ratio(&a, &b, q, q2, &part)? {
                    worst = worst.max(v);
                }
            }
        }
    }
    let mut r = Report::new("commutator", e.digest("commutator"), f64::INFINITY);
    r.fit("c", worst);
    r.passed = worst.is_finite();
    Ok(r)
}

/// Ratio of the low-pass and block forms of the `Ḃ^s_{2,2}` norm, `s < 0`.
pub fn neg_index_ensemble(e: &Ensemble, s: f64) -> Result<Report, VerifyError> {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let band = resolved_band(e.n);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for k in 0..e.trials {
        let f = random::random_field(&grid, 1, &band, Draw::Gaussian, 1.0, &mut e.rng(k));
        if let Some(v) = paracalc::neg_index_equiv(&f, NormSpec::sobolev(s), &part)?.ratio {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let tag = format!("neg-index-{s}");
    let mut r = Report::new(&tag, e.digest(&tag), f64::INFINITY);
    r.fit("min_ratio", lo);
    r.fit("max_ratio", hi);
    r.passed = lo > 0.0 && hi.is_finite();
    Ok(r)
}

/// Flat envelope used by the L^∞ interpolation sampler.
pub fn linf_band(n: usize) -> Spectrum {
    Spectrum::new(1.0, (n / 3) as f64, 0.0)
}

/// One constant for `‖f‖_{L^∞} ≤ C(‖f‖_{L²} + √N‖f‖_{H¹} + 2^{−Ns}‖f‖_{Ḣ^{1+s}})`
/// over `N ∈ 1..=10` and random-phase fields.
pub fn linf_interp_ensemble(e: &Ensemble, s: f64, bound: Option<f64>) -> Result<Report, VerifyError> {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let band = linf_band(e.n);
    let ns: Vec<u32> = (1..=10).collect();
    let reports: Vec<Report> = (0..e.trials)
        .map(|k| {
            let f = random::random_field(&grid, 1, &band, Draw::Phase, 1.0, &mut e.rng(k));
            linf_interp_check(&f, s, &ns, &part, None)
        })
        .collect::<Result<_, _>>()?;
    let c = reports.iter().map(|r| r.get("c").unwrap_or(0.0)).fold(0.0, f64::max);
    let tag = format!("linf-interp-{s}");
    let mut r = Report::new(&tag, e.digest(&tag), bound.unwrap_or(f64::INFINITY));
    r.fit("c", c);
    r.passed = c.is_finite() && bound.is_none_or(|b| c <= b);
    Ok(r)
}

/// Parameters of the force-estimate ensemble.
pub fn force_params() -> ModelParams {
    ModelParams::new(0.2, 0.5, 1.0, 1.0, 0.1, 0.1).expect("valid parameters")
}

/// Envelope and amplitude of the force-estimate ensemble.
pub fn force_band(n: usize) -> (Spectrum, f64) {
    (Spectrum::new(1.0, (n / 3) as f64, 1.5), 0.5)
}

/// Largest force-estimate ratio over random-phase Q fields.
pub fn force_ensemble(e: &Ensemble, s: f64, p: &ModelParams, bound: Option<f64>) -> Result<Report, VerifyError> {
    let grid = e.grid();
    let part = DyadicPartition::new(&grid);
    let (band, rms) = force_band(e.n);
    let reports: Vec<Report> = (0..e.trials)
        .map(|k| {
            let q = random_q(&grid, &band, Draw::Phase, rms, &mut e.rng(k));
            force_estimate_check(&q, s, p, &part, None)
        })
        .collect::<Result<_, _>>()?;
    let c = reports.iter().map(|r| r.get("ratio").unwrap_or(0.0)).fold(0.0, f64::max);
    let tag = format!("force-{s}");
    let mut r = Report::new(&tag, e.digest(&tag), bound.unwrap_or(f64::INFINITY));
    r.fit("c", c);
    r.passed = c.is_finite() && bound.is_none_or(|b| c <= b) && reports.iter().all(|r| r.passed);
    Ok(r)
}

/// `√6 |tr Q³| ≤ |Q|³` on random traceless symmetric matrices; equality
/// holds for uniaxial ones.
pub fn cubic_trace_ensemble(e: &Ensemble) -> Report {
    let mut rng = e.rng(0);
    let mut worst: f64 = 0.0;
    for _ in 0..e.trials {
        let c: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let m = coeffs_to_mat(&c);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let t3 = trace(&mat_mul(&mat_mul(&m, &m), &m));
        worst = worst.max(6f64.sqrt() * t3.abs() / norm.powi(3));
    }
    let tol = 1.0 + 1e-12;
    let mut r = Report::new("cubic-trace", e.digest("cubic-trace"), tol);
    r.measure("max_ratio", worst);
    r.passed = worst <= tol;
    r
}

/// Runs a named lemma ensemble with its default grid size. `Ok` holds one
/// report per parameter value tested.
pub fn run_lemma(name: &str, trials: usize, seed: u64) -> Result<Vec<Report>, VerifyError> {
    let e = |n| Ensemble::new(n, trials, seed);
    Ok(match name {
        "partition" => vec![partition_check(256)],
        "bony" => vec![bony_ensemble(&e(128))],
        "sym-decomp" => vec![sym_decomp_ensemble(&e(64), 3)],
        "cancellation" => vec![cancellation_ensemble(&e(64))],
        "transport" => vec![transport_ensemble(&e(64))],
        "product" => baseline::PRODUCT
            .iter()
            .map(|&(s, t, c)| product_ensemble(&e(128), s, t, Some(c * baseline::MARGIN)))
            .collect::<Result<_, _>>()?,
        "commutator" => vec![commutator_ensemble(&e(64))?],
        "neg-index" => vec![neg_index_ensemble(&e(64), -0.5)?],
        "linf-interp" => baseline::LINF_INTERP
            .iter()
            .map(|&(s, c)| linf_interp_ensemble(&e(128), s, Some(c * baseline::MARGIN)))
            .collect::<Result<_, _>>()?,
        "force" => baseline::FORCE
            .iter()
            .map(|&(s, c)| force_ensemble(&e(64), s, &force_params(), Some(c * baseline::MARGIN)))
            .collect::<Result<_, _>>()?,
        "cubic-trace" => vec![cubic_trace_ensemble(&e(64))],
        _ => return Err(VerifyError::UnknownCheck(name.to_string())),
    })
}
