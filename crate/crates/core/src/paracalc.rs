//! Homogeneous Littlewood-Paley calculus on the lattice.
//!
//! The radial profile is
//!
//! ```text
//! χ(r) = 1                 r ≤ 3/4
//!      = g(4(1 − r))       3/4 < r < 1,    g(x) = h(x)/(h(x) + h(1 − x)),  h(x) = e^{−1/x}
//!      = 0                 r ≥ 1
//! ```
//!
//! with blocks `φ_q(ξ) = χ(ξ 2^{−q−1}) − χ(ξ 2^{−q})` supported in
//! `3/4·2^q < |ξ| < 2^{q+1}`, `Δ̇_q f = 𝓕⁻¹(φ_q f̂)` and `Ṡ_j f = 𝓕⁻¹(χ(ξ 2^{−j}) f̂)`
//! on non-zero modes (so `Ṡ_j = Σ_{q<j} Δ̇_q`). Frequencies are physical,
//! `ξ = k·2π/len`.
//!
//! Resolved band: with `κ_min = 2π/len` and `κ_max = √2·(n/2)·2π/len`, the
//! blocks `q_min = ⌊log₂ κ_min⌋ ..= q_max = ⌈log₂(4κ_max/3)⌉ − 1` are the only
//! ones that touch the lattice. Every other block is identically zero, and
//! `Σ_{q_min ≤ q ≤ q_max} φ_q = 1` on every non-zero lattice mode. On the
//! standard `2π` torus this is `q = 0 ..= 6` for `n = 128` and `0 ..= 7` for
//! `n = 256`.
//!
//! Zero modes are outside every block: all homogeneous quantities ignore
//! spatial means. The Ḣˢ inner product is the Besov form
//! `Σ_q 2^{2qs} ⟨Δ̇_q u, Δ̇_q v⟩`, evaluated spectrally with the per-mode weight
//! `Σ_q 2^{2qs} φ_q(ξ)²`. Because at most two blocks overlap at any
//! frequency, `½ ≤ Σ_q φ_q² ≤ 1`; hence at `s = 0` the block form lies between
//! `½` and `1` times the L² inner product of the mean-zero parts.
//!
//! Products are formed pointwise on the grid. Decompositions of products are
//! exact identities only when the product is not aliased, i.e. for inputs
//! with `max(|k₁|, |k₂|) < n/4`.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::random::{self, Draw, Spectrum};
use crate::spectral::{det_max, Grid, RealField, SpectralField};

/// Smooth transition `g(x) = h(x)/(h(x) + h(1 − x))`, `h(x) = exp(−1/x)`.
fn smooth_step(x: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let (a, b) = (h(x), h(1.0 - x));
    a / (a + b)
}

/// Radial cutoff profile `χ`.
pub fn chi(r: f64) -> f64 {
    if r <= 0.75 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        smooth_step(4.0 * (1.0 - r))
    }
}

/// `φ_q(ξ)` for a physical frequency magnitude.
pub fn phi(q: i32, xi: f64) -> f64 {
    chi(xi * 2f64.powi(-q - 1)) - chi(xi * 2f64.powi(-q))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParacalcError {
    #[error("block index {q} outside the resolved range [{q_min}, {q_max}]")]
    BlockOutOfRange { q: i32, q_min: i32, q_max: i32 },
    #[error("block indices {q} and {q2} differ by more than 5")]
    FarBlocks { q: i32, q2: i32 },
    #[error("regularity index must be negative, got {0}")]
    NonNegativeIndex(f64),
    #[error("product law needs |s| < 1, |t| < 1 and s + t > 0, got s = {s}, t = {t}")]
    ProductRange { s: f64, t: f64 },
    #[error("integrability exponent must be at least 1, got {0}")]
    Exponent(f64),
    #[error("matrix fields have mismatched sizes")]
    Shape,
}

fn low_multiplier(grid: &Grid, j: i32, idx: usize) -> f64 {
    if idx == 0 {
        0.0
    } else {
        chi(grid.kappa_abs(idx) * 2f64.powi(-j))
    }
}

/// Dyadic partition of unity tabulated on a grid.
///
/// Each lattice mode touches at most two consecutive blocks; the table
/// stores the lower block index and both values.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    grid: Grid,
    q_min: i32,
    q_max: i32,
    lower: Vec<i32>,
    lo_val: Vec<f64>,
    hi_val: Vec<f64>,
    /// `Ṡ_j` multipliers for `j` in `q_min − 1..=q_max + 2`.
    lows: Vec<Vec<f64>>,
}

impl DyadicPartition {
    pub fn new(grid: &Grid) -> Self {
        let q_min = grid.kappa_unit().log2().floor() as i32;
        let q_max = (4.0 * grid.kappa_max() / 3.0).log2().ceil() as i32 - 1;
        let size = grid.size();
        let mut lower = vec![i32::MIN; size];
        let mut lo_val = vec![0.0; size];
        let mut hi_val = vec![0.0; size];
        for i in 1..size {
            let xi = grid.kappa_abs(i);
            if xi == 0.0 {
                continue;
            }
            let qa = (q_min..=q_max).find(|&q| phi(q, xi) > 0.0).unwrap_or(q_max);
            lower[i] = qa;
            lo_val[i] = phi(qa, xi);
            hi_val[i] = if qa < q_max { phi(qa + 1, xi) } else { 0.0 };
        }
        let lows = (q_min - 1..=q_max + 2)
            .map(|j| (0..size).map(|i| low_multiplier(grid, j, i)).collect())
            .collect();
        Self {
            grid: grid.clone(),
            q_min,
            q_max,
            lower,
            lo_val,
            hi_val,
            lows,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn q_min(&self) -> i32 {
        self.q_min
    }

    pub fn q_max(&self) -> i32 {
        self.q_max
    }

    /// Block indices that can be non-zero on the lattice.
    pub fn blocks(&self) -> std::ops::RangeInclusive<i32> {
        self.q_min..=self.q_max
    }

    /// `φ_q` at flat index `idx`.
    pub fn phi_at(&self, q: i32, idx: usize) -> f64 {
        let qa = self.lower[idx];
        if qa == i32::MIN {
            0.0
        } else if q == qa {
            self.lo_val[idx]
        } else if q == qa + 1 {
            self.hi_val[idx]
        } else {
            0.0
        }
    }

    /// `Σ_q φ_q` at flat index `idx`.
    pub fn partition_sum(&self, idx: usize) -> f64 {
        self.lo_val[idx] + self.hi_val[idx]
    }

    /// Multiplier of `Ṡ_j` at flat index `idx`: `χ(ξ 2^{−j})` off the zero mode.
    pub fn low_at(&self, j: i32, idx: usize) -> f64 {
        match usize::try_from(j - (self.q_min - 1)).ok().and_then(|k| self.lows.get(k)) {
            Some(t) => t[idx],
            None => low_multiplier(&self.grid, j, idx),
        }
    }

    /// Block-form Ḣˢ weight `Σ_q 2^{2qs} φ_q²` at flat index `idx`.
    pub fn sobolev_weight(&self, s: f64, idx: usize) -> f64 {
        let qa = self.lower[idx];
        if qa == i32::MIN {
            return 0.0;
        }
        let (a, b) = (self.lo_val[idx], self.hi_val[idx]);
        (2.0 * qa as f64 * s).exp2() * a * a + (2.0 * (qa + 1) as f64 * s).exp2() * b * b
    }

    fn check_block(&self, q: i32) -> Result<(), ParacalcError> {
        if self.blocks().contains(&q) {
            Ok(())
        } else {
            Err(ParacalcError::BlockOutOfRange {
                q,
                q_min: self.q_min,
                q_max: self.q_max,
            })
        }
    }

    /// Largest `|Σ_q φ_q(k) − 1|` over non-zero lattice modes.
    pub fn partition_defect(&self) -> f64 {
        det_max(self.grid.size(), |i| if i == 0 { 0.0 } else { (self.partition_sum(i) - 1.0).abs() })
    }
}

/// Regularity and integrability indices of a Besov norm. `p` and `r` may be
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub s: f64,
    pub p: f64,
    pub r: f64,
}

impl NormSpec {
    pub fn new(s: f64, p: f64, r: f64) -> Self {
        Self { s, p, r }
    }

    /// The Ḣˢ = Ḃˢ₂,₂ specification.
    pub fn sobolev(s: f64) -> Self {
        Self { s, p: 2.0, r: 2.0 }
    }

    fn validate(&self) -> Result<(), ParacalcError> {
        for e in [self.p, self.r] {
            if !(e >= 1.0) {
                return Err(ParacalcError::Exponent(e));
            }
        }
        Ok(())
    }
}

/// `‖(x_q)‖_{l^r}`.
fn lr_norm(values: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        values.iter().copied().fold(0.0, f64::max)
    } else {
        values.iter().map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `Δ̇_q f`.
pub fn dyadic_block(f: &SpectralField, q: i32, part: &DyadicPartition) -> Result<SpectralField, ParacalcError> {
    part.check_block(q)?;
    Ok(f.map_real_multiplier(|i| part.phi_at(q, i)))
}

/// `Ṡ_j f = Σ_{q ≤ j−1} Δ̇_q f`; valid for any `j`.
pub fn low_freq(f: &SpectralField, j: i32, part: &DyadicPartition) -> SpectralField {
    f.map_real_multiplier(|i| part.low_at(j, i))
}

/// `‖Δ̇_q f‖_{L^p}` for every resolved block.
pub fn block_lp_norms(f: &SpectralField, p: f64, part: &DyadicPartition) -> Vec<f64> {
    part.blocks()
        .map(|q| {
            if p == 2.0 {
                f.weighted_norm_sq(|i| {
                    let v = part.phi_at(q, i);
                    v * v
                })
                .sqrt()
            } else {
                f.map_real_multiplier(|i| part.phi_at(q, i)).to_real().lp_norm(p)
            }
        })
        .collect()
}

/// Besov norm value together with whether a spatial mean had to be dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovNorm {
    pub value: f64,
    pub mean_removed: bool,
}

/// Lattice-truncated `‖f‖_{Ḃˢ_{p,r}} = ‖(2^{qs}‖Δ̇_q f‖_{L^p})_q‖_{l^r}`.
pub fn besov_norm(f: &SpectralField, spec: NormSpec, part: &DyadicPartition) -> Result<BesovNorm, ParacalcError> {
    spec.validate()?;
    // Round-off means of sampled mean-free data are not reported.
    let mean_removed = (0..f.ncomp()).any(|c| f.comp(c)[0].norm() > 1e-12 * f.coeff_norm());
    let norms = block_lp_norms(f, spec.p, part);
    let weighted: Vec<f64> = part
        .blocks()
        .zip(norms)
        .map(|(q, v)| (q as f64 * spec.s).exp2() * v)
        .collect();
    Ok(BesovNorm {
        value: lr_norm(&weighted, spec.r),
        mean_removed,
    })
}

/// `⟨f, g⟩_{Ḣˢ} = Σ_q 2^{2qs} ⟨Δ̇_q f, Δ̇_q g⟩_{L²}`.
pub fn sobolev_inner(f: &SpectralField, g: &SpectralField, s: f64, part: &DyadicPartition) -> f64 {
    f.weighted_inner(g, |i| part.sobolev_weight(s, i))
}

/// `‖f‖²_{Ḣˢ}` in block form.
pub fn sobolev_norm_sq(f: &SpectralField, s: f64, part: &DyadicPartition) -> f64 {
    f.weighted_norm_sq(|i| part.sobolev_weight(s, i))
}

/// `‖∇^m f‖²_{Ḣˢ}`, i.e. the block form with an extra `|ξ|^{2m}` weight;
/// `m = 1` gives `‖∇f‖²`, `m = 2` gives `‖Δf‖²`.
pub fn sobolev_norm_sq_deriv(f: &SpectralField, s: f64, m: i32, part: &DyadicPartition) -> f64 {
    let grid = part.grid();
    f.weighted_norm_sq(|i| part.sobolev_weight(s, i) * grid.kappa_sq(i).powi(m))
}

/// Mean-zero Bony pieces of a product together with the mean interactions.
#[derive(Debug, Clone)]
pub struct Bony {
    /// `Ṫ_f g = Σ_q Ṡ_{q−1} f̃ Δ̇_q g̃`.
    pub t_fg: RealField,
    /// `Ṫ_g f = Σ_q Ṡ_{q−1} g̃ Δ̇_q f̃`.
    pub t_gf: RealField,
    /// `Ṙ(f, g) = Σ_q Σ_{|l|≤1} Δ̇_q f̃ Δ̇_{q+l} g̃`.
    pub rem: RealField,
    /// `f̄ g̃ + ḡ f̃ + f̄ ḡ`.
    pub mean_terms: RealField,
}

impl Bony {
    /// Sum of all four pieces, equal to `fg` for unaliased inputs.
    pub fn total(&self) -> RealField {
        let parts = [&self.t_fg, &self.t_gf, &self.rem, &self.mean_terms].map(|f| f.comp(0));
        let sum = (0..self.t_fg.grid().size()).map(|i| parts.iter().map(|p| p[i]).sum()).collect();
        RealField::from_comps(self.t_fg.grid(), vec![sum])
    }
}

/// Physical-space blocks `Δ̇_q f` for all resolved `q`.
fn real_blocks(f: &SpectralField, part: &DyadicPartition) -> Vec<RealField> {
    part.blocks()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&q| f.map_real_multiplier(|i| part.phi_at(q, i)).to_real())
        .collect()
}

/// Physical-space low-pass fields `Ṡ_j f` for `j` in `range`.
fn real_lows(f: &SpectralField, range: std::ops::RangeInclusive<i32>, part: &DyadicPartition) -> Vec<RealField> {
    range
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&j| low_freq(f, j, part).to_real())
        .collect()
}

/// Bony decomposition of the product of two scalar fields.
pub fn bony(f: &SpectralField, g: &SpectralField, part: &DyadicPartition) -> Bony {
    assert!(f.ncomp() == 1 && g.ncomp() == 1, "Bony decomposition takes scalar fields");
    let grid = part.grid();
    let size = grid.size();
    let (fm, gm) = (f.mean(0), g.mean(0));
    let (ft, gt) = (f.without_mean(), g.without_mean());
    let fb = real_blocks(&ft, part);
    let gb = real_blocks(&gt, part);
    let nb = fb.len();
    let mut t_fg = vec![0.0; size];
    let mut t_gf = vec![0.0; size];
    let mut rem = vec![0.0; size];
    for (a, fa) in fb.iter().enumerate() {
        for (b, gbb) in gb.iter().enumerate() {
            let target = if a + 2 <= b {
                &mut t_fg
            } else if b + 2 <= a {
                &mut t_gf
            } else {
                &mut rem
            };
            let (x, y) = (fa.comp(0), gbb.comp(0));
            target.par_iter_mut().enumerate().for_each(|(i, v)| *v += x[i] * y[i]);
        }
    }
    debug_assert_eq!(nb, gb.len());
    let (fr, gr) = (ft.to_real(), gt.to_real());
    let mean_terms: Vec<f64> = (0..size).map(|i| fm * gr.comp(0)[i] + gm * fr.comp(0)[i] + fm * gm).collect();
    let wrap = |v| RealField::from_comps(grid, vec![v]);
    Bony {
        t_fg: wrap(t_fg),
        t_gf: wrap(t_gf),
        rem: wrap(rem),
        mean_terms: wrap(mean_terms),
    }
}

/// Square-matrix-valued field stored entry-wise (row-major) in spectral space.
#[derive(Debug, Clone)]
pub struct MatField {
    dim: usize,
    field: SpectralField,
}

impl MatField {
    pub fn new(dim: usize, field: SpectralField) -> Result<Self, ParacalcError> {
        if field.ncomp() != dim * dim {
            return Err(ParacalcError::Shape);
        }
        Ok(Self { dim, field })
    }

    /// Random mean-zero matrix field with the given band.
    pub fn random<R: Rng>(grid: &Grid, dim: usize, spec: &Spectrum, draw: Draw, rms: f64, rng: &mut R) -> Self {
        Self {
            dim,
            field: random::random_field(grid, dim * dim, spec, draw, rms, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }
}

/// Pointwise matrix product of two physical-space matrix fields.
pub fn mat_product(a: &RealField, b: &RealField, dim: usize) -> RealField {
    let mut out = RealField::zeros(a.grid(), dim * dim);
    mat_product_into(&mut out, a, b, dim, 1.0);
    out
}

/// `acc += sign · a b`, pointwise.
fn mat_product_into(acc: &mut RealField, a: &RealField, b: &RealField, dim: usize, sign: f64) {
    for c in 0..dim * dim {
        let (i, j) = (c / dim, c % dim);
        let dst = acc.comp_mut(c);
        for k in 0..dim {
            let (x, y) = (a.comp(i * dim + k), b.comp(k * dim + j));
            for ((v, x), y) in dst.iter_mut().zip(x).zip(y) {
                *v += sign * x * y;
            }
        }
    }
}

fn diff(x: &RealField, y: &RealField) -> RealField {
    let mut out = x.clone();
    add_into(&mut out, y, -1.0);
    out
}

fn add_into(acc: &mut RealField, x: &RealField, sign: f64) {
    for c in 0..acc.ncomp() {
        for (v, s) in acc.comp_mut(c).iter_mut().zip(x.comp(c)) {
            *v += sign * s;
        }
    }
}

/// Precomputed block data for the symmetric decomposition of `Δ̇_q(AB)`.
///
/// ```text
/// 𝒥¹_q = Σ_{|q−q'|≤5} [Δ̇_q, Ṡ_{q'−1}A] Δ̇_{q'}B
/// 𝒥²_q = Σ_{|q−q'|≤5} (Ṡ_{q'−1}A − Ṡ_{q−1}A) Δ̇_q Δ̇_{q'}B
/// 𝒥³_q = Ṡ_{q−1}A Δ̇_q B
/// 𝒥⁴_q = Σ_{q' ≥ q−5} Δ̇_q(Δ̇_{q'}A Ṡ_{q'+2}B)
/// ```
///
/// Inputs have their spatial means removed. The four pieces sum to
/// `Δ̇_q(ÃB̃)` when the product is unaliased.
pub struct SymDecomp<'a> {
    part: &'a DyadicPartition,
    dim: usize,
    b: SpectralField,
    low_a: Vec<RealField>,
    blk_b: Vec<RealField>,
    /// `Ṡ_{q'−1}A Δ̇_{q'}B` per block, spectral.
    para: Vec<SpectralField>,
    /// `Δ̇_{q'}A Ṡ_{q'+2}B` per block, spectral.
    high: Vec<SpectralField>,
    /// `Δ̇_qΔ̇_{q'}B` for `q' ∈ {q, q+1}`, filled on first use.
    doubles: Vec<OnceLock<RealField>>,
}

impl<'a> SymDecomp<'a> {
    pub fn new(a: &MatField, b: &MatField, part: &'a DyadicPartition) -> Result<Self, ParacalcError> {
        if a.dim != b.dim || a.field.grid() != b.field.grid() {
            return Err(ParacalcError::Shape);
        }
        let (at, bt) = (a.field.without_mean(), b.field.without_mean());
        let (lo, hi) = (part.q_min(), part.q_max());
        let d = a.dim;
        // Δ̇_q = Ṡ_{q+1} − Ṡ_q, so blocks come from differences of low-pass fields.
        let low_a = real_lows(&at, lo - 1..=hi + 1, part);
        let low_b = real_lows(&bt, lo..=hi + 2, part);
        let blk_a: Vec<RealField> = (0..=(hi - lo) as usize).map(|k| diff(&low_a[k + 2], &low_a[k + 1])).collect();
        let blk_b: Vec<RealField> = (0..=(hi - lo) as usize).map(|k| diff(&low_b[k + 1], &low_b[k])).collect();
        let para = (0..blk_b.len())
            .into_par_iter()
            .map(|k| mat_product(&low_a[k], &blk_b[k], d).to_spectral())
            .collect();
        let high = (0..blk_a.len())
            .into_par_iter()
            .map(|k| mat_product(&blk_a[k], &low_b[k + 2], d).to_spectral())
            .collect();
        let doubles = (0..2 * blk_b.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            part,
            dim: d,
            low_a,
            blk_b,
            para,
            high,
            doubles,
            b: bt,
        })
    }

    fn low_a(&self, j: i32) -> &RealField {
        let lo = self.part.q_min() - 1;
        let j = j.clamp(lo, self.part.q_max() + 1);
        &self.low_a[(j - lo) as usize]
    }

    fn block<'b>(&self, v: &'b [RealField], q: i32) -> &'b RealField {
        &v[(q - self.part.q_min()) as usize]
    }

    /// `Δ̇_q Δ̇_{q'} B` in physical space, for `|q − q'| ≤ 1`.
    fn double_block(&self, q: i32, q2: i32) -> &RealField {
        let k = (q.min(q2) - self.part.q_min()) as usize;
        self.doubles[2 * k + (q != q2) as usize].get_or_init(|| {
            self.b
                .map_real_multiplier(|i| self.part.phi_at(q, i) * self.part.phi_at(q2, i))
                .to_real()
        })
    }

    /// `Δ̇_q Σ_{q' ∈ sel} terms[q']` in physical space.
    fn project_sum(&self, terms: &[SpectralField], q: i32, sel: impl Fn(i32) -> bool) -> RealField {
        let grid = self.part.grid();
        let picked: Vec<&SpectralField> = self.part.blocks().zip(terms).filter(|(q2, _)| sel(*q2)).map(|(_, t)| t).collect();
        let support: Vec<(usize, f64)> =
            (0..grid.size()).map(|i| (i, self.part.phi_at(q, i))).filter(|&(_, w)| w != 0.0).collect();
        let comps = (0..self.dim * self.dim)
            .into_par_iter()
            .map(|c| {
                let mut out = vec![Complex64::new(0.0, 0.0); grid.size()];
                for &(i, w) in &support {
                    out[i] = w * picked.iter().map(|t| t.comp(c)[i]).sum::<Complex64>();
                }
                out
            })
            .collect();
        SpectralField::from_comps(grid, comps).to_real()
    }

    /// The four pieces `[𝒥¹_q, 𝒥²_q, 𝒥³_q, 𝒥⁴_q]`.
    pub fn pieces(&self, q: i32) -> Result<[RealField; 4], ParacalcError> {
        self.part.check_block(q)?;
        let grid = self.part.grid();
        let d = self.dim;

        // Only q' ∈ {q−1, q, q+1} give Δ̇_qΔ̇_{q'} ≠ 0. With
        // M = Σ Ṡ_{q'−1}A Δ̇_qΔ̇_{q'}B and S = Σ Δ̇_qΔ̇_{q'}B:
        // 𝒥¹ = Δ̇_q(Σ Ṡ_{q'−1}A Δ̇_{q'}B) − M and 𝒥² = M − Ṡ_{q−1}A S.
        let mut m = RealField::zeros(grid, d * d);
        let mut sum = RealField::zeros(grid, d * d);
        for q2 in (q - 1)..=(q + 1) {
            if !self.part.blocks().contains(&q2) {
                continue;
            }
            let dd = self.double_block(q, q2);
            mat_product_into(&mut m, self.low_a(q2 - 1), dd, d, 1.0);
            add_into(&mut sum, dd, 1.0);
        }
        let mut j1 = self.project_sum(&self.para, q, |q2| (q - q2).abs() <= 5);
        add_into(&mut j1, &m, -1.0);
        let mut j2 = m;
        mat_product_into(&mut j2, self.low_a(q - 1), &sum, d, -1.0);

        let j3 = mat_product(self.low_a(q - 1), self.block(&self.blk_b, q), d);
        let j4 = self.project_sum(&self.high, q, |q2| q2 >= q - 5);
        Ok([j1, j2, j3, j4])
    }

    /// `Δ̇_q(ÃB̃)` computed directly from the pointwise product.
    pub fn reference(&self, q: i32, product: &SpectralField) -> RealField {
        product.map_real_multiplier(|i| self.part.phi_at(q, i)).to_real()
    }
}

/// The four symmetric-decomposition pieces of `Δ̇_q(AB)`.
pub fn sym_decomp(
    a: &MatField,
    b: &MatField,
    q: i32,
    part: &DyadicPartition,
) -> Result<[RealField; 4], ParacalcError> {
    part.check_block(q)?;
    SymDecomp::new(a, b, part)?.pieces(q)
}

/// Mean-zero pointwise product `ÃB̃` in spectral space.
pub fn mean_free_product(a: &MatField, b: &MatField) -> SpectralField {
    let ar = a.field.without_mean().to_real();
    let br = b.field.without_mean().to_real();
    mat_product(&ar, &br, a.dim).to_spectral()
}

/// `[Δ̇_q, Ṡ_{q'−1}A] Δ̇_{q'}B = Δ̇_q(Ṡ_{q'−1}A Δ̇_{q'}B) − Ṡ_{q'−1}A Δ̇_qΔ̇_{q'}B`.
pub fn commutator(a: &MatField, b: &MatField, q: i32, q2: i32, part: &DyadicPartition) -> Result<RealField, ParacalcError> {
    if (q - q2).abs() > 5 {
        return Err(ParacalcError::FarBlocks { q, q2 });
    }
    if a.dim != b.dim {
        return Err(ParacalcError::Shape);
    }
    let d = a.dim;
    let low = low_freq(&a.field, q2 - 1, part).to_real();
    let bq2 = b.field.map_real_multiplier(|i| part.phi_at(q2, i));
    let inner = mat_product(&low, &bq2.to_real(), d)
        .to_spectral()
        .map_real_multiplier(|i| part.phi_at(q, i))
        .to_real();
    let dd = bq2.map_real_multiplier(|i| part.phi_at(q, i)).to_real();
    let mut out = inner;
    add_into(&mut out, &mat_product(&low, &dd, d), -1.0);
    Ok(out)
}

/// `‖[Δ̇_q, Ṡ_{q'−1}A]Δ̇_{q'}B‖_{L²} / (2^{−q} ‖Ṡ_{q'−1}∇A‖_{L^∞} ‖Δ̇_{q'}B‖_{L²})`,
/// or `None` when the denominator vanishes.
pub fn commutator_ratio(a: &MatField, b: &MatField, q: i32, q2: i32, part: &DyadicPartition) -> Result<Option<f64>, ParacalcError> {
    let lhs = commutator(a, b, q, q2, part)?.l2_norm();
    let grad_low = low_freq(&a.field, q2 - 1, part).gradient().to_real().linf_norm();
    let bq2 = dyadic_block(&b.field, q2, part)?.l2_norm();
    let den = (-q as f64).exp2() * grad_low * bq2;
    Ok((den > 1e-30).then(|| lhs / den))
}

/// Both sides of the negative-index characterization of Besov norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegIndexEquiv {
    /// `‖(2^{qs}‖Δ̇_q f‖_{L^p})_q‖_{l^r}`.
    pub block: f64,
    /// `‖(2^{qs}‖Ṡ_q f‖_{L^p})_q‖_{l^r}` over all `q ∈ ℤ`.
    pub low: f64,
    /// `low / block`, absent when both vanish.
    pub ratio: Option<f64>,
}

/// Compares the block and low-pass forms of a negative-index Besov norm.
/// `Ṡ_q f` vanishes for `q ≤ q_min` and equals `f̃` for `q ≥ q_max + 1`; the
/// tail beyond `q_max + 1` is summed in closed form.
pub fn neg_index_equiv(f: &SpectralField, spec: NormSpec, part: &DyadicPartition) -> Result<NegIndexEquiv, ParacalcError> {
    if !(spec.s < 0.0) {
        return Err(ParacalcError::NonNegativeIndex(spec.s));
    }
    spec.validate()?;
    let block = besov_norm(f, spec, part)?.value;
    let lp = |g: &SpectralField| {
        if spec.p == 2.0 {
            g.l2_norm()
        } else {
            g.to_real().lp_norm(spec.p)
        }
    };
    let top = part.q_max() + 1;
    let mut terms: Vec<f64> = ((part.q_min() + 1)..=top)
        .map(|q| (q as f64 * spec.s).exp2() * lp(&low_freq(f, q, part)))
        .collect();
    let full = lp(&f.without_mean());
    let first_tail = ((top + 1) as f64 * spec.s).exp2() * full;
    let low = if spec.r.is_infinite() {
        terms.push(first_tail);
        lr_norm(&terms, spec.r)
    } else {
        let ratio = (spec.s * spec.r).exp2();
        let tail = first_tail.powf(spec.r) / (1.0 - ratio);
        (terms.iter().map(|v| v.powf(spec.r)).sum::<f64>() + tail).powf(1.0 / spec.r)
    };
    let ratio = (block > 1e-300).then(|| low / block);
    Ok(NegIndexEquiv { block, low, ratio })
}

/// Summary of product-law ratios over a random ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductStats {
    pub max: f64,
    pub mean: f64,
    pub ratios: Vec<f64>,
}

/// Checks the `(s, t)` range of the two-dimensional product law.
pub fn check_product_indices(s: f64, t: f64) -> Result<(), ParacalcError> {
    if s.abs() < 1.0 && t.abs() < 1.0 && s + t > 0.0 {
        Ok(())
    } else {
        Err(ParacalcError::ProductRange { s, t })
    }
}

/// `‖ab‖_{Ḣ^{s+t−1}} / (‖a‖_{Ḣˢ} ‖b‖_{Ḣᵗ})`, `0` when the product vanishes
/// and `None` when a factor has zero norm.
pub fn product_ratio(a: &SpectralField, b: &SpectralField, s: f64, t: f64, part: &DyadicPartition) -> Option<f64> {
    let den = (sobolev_norm_sq(a, s, part) * sobolev_norm_sq(b, t, part)).sqrt();
    let ab = RealField::from_comps(
        part.grid(),
        vec![a.to_real().comp(0).iter().zip(b.to_real().comp(0)).map(|(x, y)| x * y).collect()],
    )
    .to_spectral();
    let num = sobolev_norm_sq(&ab, s + t - 1.0, part).sqrt();
    if num == 0.0 {
        Some(0.0)
    } else if den > 1e-30 {
        Some(num / den)
    } else {
        None
    }
}

/// Samples the product law on `trials` seeded pairs of random fields with a
/// fixed spectral envelope and random phases.
pub fn product_estimate_sample(
    s: f64,
    t: f64,
    trials: usize,
    seed: u64,
    spectrum: &Spectrum,
    part: &DyadicPartition,
) -> Result<ProductStats, ParacalcError> {
    check_product_indices(s, t)?;
    let mut rng = random::rng(seed);
    let grid = part.grid();
    let pairs: Vec<(SpectralField, SpectralField)> = (0..trials)
        .map(|_| {
            let a = random::random_field(grid, 1, spectrum, Draw::Phase, 1.0, &mut rng);
            let b = random::random_field(grid, 1, spectrum, Draw::Phase, 1.0, &mut rng);
            (a, b)
        })
        .collect();
    let ratios: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| product_ratio(a, b, s, t, part).unwrap_or(0.0))
        .collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let mean = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(ProductStats { max, mean, ratios })
}
