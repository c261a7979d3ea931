//! Periodic grid, FFT-backed field representations and Fourier multipliers.
//!
//! The domain is the torus `[0, len)²` sampled on an `n × n` grid. Point
//! `(i1, i2)` lives at flat index `i2 * n + i1`, so `x₁` varies fastest.
//! Lattice index `m` maps to the integer wavenumber `m` for `m ≤ n/2` and
//! `m − n` otherwise; the physical wavenumber is that integer times `2π/len`.
//!
//! Transform normalization: the forward transform is unscaled and the inverse
//! carries `1/n²`. With that convention the discrete L² norm is
//! `‖f‖² = (len/n)² Σₓ |f(x)|² = (len²/n⁴) Σₖ |f̂(k)|²`.
//!
//! Odd-order derivatives zero the Nyquist wavenumber so that real fields stay
//! real; even-order multipliers keep it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

const SUM_CHUNK: usize = 4096;

/// Sums `f(0..len)` in fixed-size chunks so the result does not depend on
/// the thread count.
pub(crate) fn det_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(SUM_CHUNK);
    let parts: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(len);
            (lo..hi).map(&f).sum()
        })
        .collect();
    parts.iter().sum()
}

/// Maximum of `f(0..len)`, `0` for an empty range.
pub(crate) fn det_max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..len).into_par_iter().map(&f).reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid size {0} must be a power of two and at least 8")]
    BadSize(usize),
    #[error("period must be positive and finite, got {0}")]
    BadLength(f64),
}

/// Coordinate axis of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

struct GridInner {
    n: usize,
    len: f64,
    k: Vec<i64>,
    kappa: Vec<f64>,
    kappa_odd: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Square periodic grid with precomputed wavenumber tables and FFT plans.
/// Cloning is cheap; clones share the tables.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n())
            .field("len", &self.len())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n() == other.n() && self.len() == other.len())
    }
}

impl Grid {
    pub fn new(n: usize, len: f64) -> Result<Self, GridError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::BadSize(n));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(GridError::BadLength(len));
        }
        let unit = 2.0 * PI / len;
        let k: Vec<i64> = (0..n)
            .map(|m| if m <= n / 2 { m as i64 } else { m as i64 - n as i64 })
            .collect();
        let kappa: Vec<f64> = k.iter().map(|&k| k as f64 * unit).collect();
        let kappa_odd: Vec<f64> = k
            .iter()
            .map(|&k| if k == (n / 2) as i64 { 0.0 } else { k as f64 * unit })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                len,
                k,
                kappa,
                kappa_odd,
                fwd,
                inv,
            }),
        })
    }

    /// Grid on the standard `2π` torus.
    pub fn standard(n: usize) -> Result<Self, GridError> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn len(&self) -> f64 {
        self.inner.len
    }

    /// Number of grid points, `n²`.
    pub fn size(&self) -> usize {
        self.inner.n * self.inner.n
    }

    /// Grid spacing `len / n`.
    pub fn dx(&self) -> f64 {
        self.inner.len / self.inner.n as f64
    }

    /// Quadrature weight of one cell, `(len/n)²`.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Physical wavenumber of the lowest non-zero mode, `2π/len`.
    pub fn kappa_unit(&self) -> f64 {
        2.0 * PI / self.inner.len
    }

    /// Largest physical wavenumber magnitude on the lattice.
    pub fn kappa_max(&self) -> f64 {
        std::f64::consts::SQRT_2 * (self.inner.n / 2) as f64 * self.kappa_unit()
    }

    /// Integer wavenumber of lattice index `m`.
    pub fn wavenumber(&self, m: usize) -> i64 {
        self.inner.k[m]
    }

    /// Integer wavenumber pair of flat index `idx`.
    pub fn mode(&self, idx: usize) -> (i64, i64) {
        let n = self.inner.n;
        (self.inner.k[idx % n], self.inner.k[idx / n])
    }

    /// Physical wavenumber pair of flat index `idx`.
    pub fn kappa(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        (self.inner.kappa[idx % n], self.inner.kappa[idx / n])
    }

    /// Physical wavenumber pair used by odd-order derivatives (Nyquist zeroed).
    pub fn kappa_odd(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        (self.inner.kappa_odd[idx % n], self.inner.kappa_odd[idx / n])
    }

    /// `|κ|²` at flat index `idx`.
    pub fn kappa_sq(&self, idx: usize) -> f64 {
        let (a, b) = self.kappa(idx);
        a * a + b * b
    }

    /// `|κ|` at flat index `idx`.
    pub fn kappa_abs(&self, idx: usize) -> f64 {
        self.kappa_sq(idx).sqrt()
    }

    /// Flat index of the mode `−k`.
    pub fn neg_index(&self, idx: usize) -> usize {
        let n = self.inner.n;
        let (i1, i2) = (idx % n, idx / n);
        ((n - i2) % n) * n + (n - i1) % n
    }

    /// Flat index of the integer mode `(k1, k2)`, wrapping modulo `n`.
    pub fn index_of(&self, k1: i64, k2: i64) -> usize {
        let n = self.inner.n as i64;
        (k2.rem_euclid(n) * n + k1.rem_euclid(n)) as usize
    }

    /// Physical coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        let h = self.dx();
        ((idx % n) as f64 * h, (idx / n) as f64 * h)
    }

    fn fft_rows(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.inner.n;
        let fft = if inverse { &self.inner.inv } else { &self.inner.fwd };
        let rows_per_task = (8192 / n).max(1);
        data.par_chunks_mut(n * rows_per_task).for_each(|chunk| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        });
    }

    fn transpose(&self, src: &[Complex64], dst: &mut [Complex64]) {
        const TILE: usize = 16;
        let n = self.inner.n;
        let t = TILE.min(n);
        // Each task owns a band of `t` destination rows and walks the
        // source in square tiles.
        dst.par_chunks_mut(n * t).enumerate().for_each(|(band, rows)| {
            let r0 = band * t;
            for c0 in (0..n).step_by(t) {
                for c in c0..c0 + t {
                    let src_row = &src[c * n + r0..c * n + r0 + t];
                    for (dr, v) in src_row.iter().enumerate() {
                        rows[dr * n + c] = *v;
                    }
                }
            }
        });
    }

    /// In-place 2D transform; the inverse includes the `1/n²` factor.
    pub fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.size(), "buffer does not match grid");
        let mut tmp = vec![Complex64::new(0.0, 0.0); data.len()];
        self.fft_rows(data, inverse);
        self.transpose(data, &mut tmp);
        self.fft_rows(&mut tmp, inverse);
        self.transpose(&tmp, data);
        if inverse {
            let s = 1.0 / self.size() as f64;
            data.par_iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Forward transforms of one or two real planes using a single complex FFT.
    fn forward_pair(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
        let mut z: Vec<Complex64> = match b {
            Some(b) => a
                .par_iter()
                .zip(b.par_iter())
                .map(|(&x, &y)| Complex64::new(x, y))
                .collect(),
            None => a.par_iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.fft2(&mut z, false);
        if b.is_none() {
            return (z, None);
        }
        let n = self.inner.n;
        let mut fa = vec![Complex64::new(0.0, 0.0); z.len()];
        let mut fb = vec![Complex64::new(0.0, 0.0); z.len()];
        fa.par_chunks_mut(n)
            .zip(fb.par_chunks_mut(n))
            .enumerate()
            .for_each(|(i2, (ra, rb))| {
                let row = &z[i2 * n..(i2 + 1) * n];
                let j2 = (n - i2) % n;
                let mirror = &z[j2 * n..(j2 + 1) * n];
                for i1 in 0..n {
                    let x = row[i1];
                    let y = mirror[(n - i1) % n].conj();
                    ra[i1] = (x + y) * 0.5;
                    rb[i1] = (x - y) * Complex64::new(0.0, -0.5);
                }
            });
        (fa, Some(fb))
    }

    /// Inverse transforms of one or two spectra assumed Hermitian; the real
    /// part of each result is returned.
    fn inverse_pair(&self, a: &[Complex64], b: Option<&[Complex64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let mut z: Vec<Complex64> = match b {
            Some(b) => a
                .par_iter()
                .zip(b.par_iter())
                .map(|(&x, &y)| x + Complex64::new(0.0, 1.0) * y)
                .collect(),
            None => a.to_vec(),
        };
        self.fft2(&mut z, true);
        let ra = z.par_iter().map(|v| v.re).collect();
        let rb = b.map(|_| z.par_iter().map(|v| v.im).collect());
        (ra, rb)
    }
}

/// Multi-component field in spectral space.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

/// Multi-component real field on the grid.
#[derive(Clone, Debug)]
pub struct RealField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        Self {
            grid: grid.clone(),
            comps: vec![vec![Complex64::new(0.0, 0.0); grid.size()]; ncomp],
        }
    }

    pub fn from_comps(grid: &Grid, comps: Vec<Vec<Complex64>>) -> Self {
        for c in &comps {
            assert_eq!(c.len(), grid.size(), "component does not match grid");
        }
        Self {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.comps[i]
    }

    pub fn comps(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// Single-component field holding component `i`.
    pub fn component(&self, i: usize) -> SpectralField {
        Self::from_comps(&self.grid, vec![self.comps[i].clone()])
    }

    /// Concatenates the components of several fields on the same grid.
    pub fn stack(parts: &[&SpectralField]) -> SpectralField {
        let grid = parts[0].grid.clone();
        let comps = parts
            .iter()
            .flat_map(|p| {
                assert_eq!(p.grid, grid, "fields live on different grids");
                p.comps.iter().cloned()
            })
            .collect();
        Self { grid, comps }
    }

    /// Transforms every component back to real space, pairing components
    /// into single complex FFTs.
    pub fn to_real(&self) -> RealField {
        let pairs: Vec<(usize, Option<usize>)> = (0..self.ncomp())
            .step_by(2)
            .map(|i| (i, (i + 1 < self.ncomp()).then_some(i + 1)))
            .collect();
        let out: Vec<(Vec<f64>, Option<Vec<f64>>)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                self.grid
                    .inverse_pair(&self.comps[i], j.map(|j| self.comps[j].as_slice()))
            })
            .collect();
        let mut comps = Vec::with_capacity(self.ncomp());
        for (a, b) in out {
            comps.push(a);
            if let Some(b) = b {
                comps.push(b);
            }
        }
        RealField {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Applies a real per-mode multiplier to every component.
    pub fn map_real_multiplier<F>(&self, f: F) -> SpectralField
    where
        F: Fn(usize) -> f64 + Sync,
    {
        let w: Vec<f64> = (0..self.grid.size()).into_par_iter().map(&f).collect();
        let comps = self
            .comps
            .iter()
            .map(|c| c.par_iter().zip(w.par_iter()).map(|(v, w)| v * w).collect())
            .collect();
        Self {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Applies a complex per-mode multiplier to every component.
    pub fn map_multiplier<F>(&self, f: F) -> SpectralField
    where
        F: Fn(usize) -> Complex64 + Sync,
    {
        let comps = self
            .comps
            .iter()
            .map(|c| c.par_iter().enumerate().map(|(i, v)| v * f(i)).collect())
            .collect();
        Self {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// `∂_axis^order` applied to every component: multiplier `(iκ_axis)^order`.
    pub fn derive(&self, axis: Axis, order: u32) -> SpectralField {
        if order == 0 {
            return self.clone();
        }
        let grid = &self.grid;
        let odd = order % 2 == 1;
        self.map_multiplier(|i| {
            let (k1, k2) = if odd { grid.kappa_odd(i) } else { grid.kappa(i) };
            let k = match axis {
                Axis::X1 => k1,
                Axis::X2 => k2,
            };
            Complex64::new(0.0, k).powu(order)
        })
    }

    /// Gradient of every component: output holds `∂₁f₀, ∂₂f₀, ∂₁f₁, ∂₂f₁, …`.
    pub fn gradient(&self) -> SpectralField {
        let d1 = self.derive(Axis::X1, 1);
        let d2 = self.derive(Axis::X2, 1);
        let mut comps = Vec::with_capacity(2 * self.ncomp());
        for (a, b) in d1.comps.into_iter().zip(d2.comps) {
            comps.push(a);
            comps.push(b);
        }
        Self {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Laplacian, multiplier `−|κ|²`.
    pub fn laplacian(&self) -> SpectralField {
        let grid = &self.grid;
        self.map_real_multiplier(|i| -grid.kappa_sq(i))
    }

    /// Divergence of a two-component field, `∂₁v₁ + ∂₂v₂`.
    pub fn divergence(&self) -> SpectralField {
        assert_eq!(self.ncomp(), 2, "divergence needs a planar vector field");
        let grid = &self.grid;
        let c: Vec<Complex64> = (0..grid.size())
            .into_par_iter()
            .map(|i| {
                let (k1, k2) = grid.kappa_odd(i);
                Complex64::new(0.0, k1) * self.comps[0][i] + Complex64::new(0.0, k2) * self.comps[1][i]
            })
            .collect();
        Self::from_comps(grid, vec![c])
    }

    /// Leray projection of a two-component field onto divergence-free fields.
    /// Modes whose derivative wavenumber vanishes (the zero mode, and the
    /// pure Nyquist corner) pass through unchanged.
    pub fn leray_project(&self) -> SpectralField {
        assert_eq!(self.ncomp(), 2, "Leray projection needs a planar vector field");
        let grid = &self.grid;
        let (c1, c2): (Vec<Complex64>, Vec<Complex64>) = (0..grid.size())
            .into_par_iter()
            .map(|i| {
                let (k1, k2) = grid.kappa_odd(i);
                let kk = k1 * k1 + k2 * k2;
                let (v1, v2) = (self.comps[0][i], self.comps[1][i]);
                if kk == 0.0 {
                    return (v1, v2);
                }
                let d = (v1 * k1 + v2 * k2) / kk;
                (v1 - d * k1, v2 - d * k2)
            })
            .unzip();
        Self::from_comps(grid, vec![c1, c2])
    }

    /// Friedrichs cutoff `J_n`: keeps modes with `|κ| ∈ [1/n, n]`.
    pub fn freq_cutoff(&self, n_cut: usize) -> SpectralField {
        assert!(n_cut >= 1, "cutoff index must be at least 1");
        let grid = &self.grid;
        let hi = n_cut as f64;
        let lo = 1.0 / hi;
        let tol = 1e-12 * hi;
        self.map_real_multiplier(|i| {
            let k = grid.kappa_abs(i);
            if k >= lo - tol && k <= hi + tol {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Two-thirds rule: zeroes modes with `max(|k₁|, |k₂|) > n/3`.
    pub fn dealias(&self) -> SpectralField {
        let grid = &self.grid;
        let n = grid.n() as i64;
        self.map_real_multiplier(|i| {
            let (k1, k2) = grid.mode(i);
            if 3 * k1.abs().max(k2.abs()) > n {
                0.0
            } else {
                1.0
            }
        })
    }

    /// In-place two-thirds rule.
    pub fn dealias_in_place(&mut self) {
        let grid = self.grid.clone();
        let n = grid.n() as i64;
        for c in &mut self.comps {
            c.par_iter_mut().enumerate().for_each(|(i, v)| {
                let (k1, k2) = grid.mode(i);
                if 3 * k1.abs().max(k2.abs()) > n {
                    *v = Complex64::new(0.0, 0.0);
                }
            });
        }
    }

    /// Spatial mean of component `i`.
    pub fn mean(&self, i: usize) -> f64 {
        self.comps[i][0].re / self.grid.size() as f64
    }

    /// Removes the spatial mean of every component.
    pub fn zero_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = Complex64::new(0.0, 0.0);
        }
    }

    /// Copy with every mean removed.
    pub fn without_mean(&self) -> SpectralField {
        let mut f = self.clone();
        f.zero_mean();
        f
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        self.map_real_multiplier(|_| alpha)
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &SpectralField) {
        assert_eq!(self.ncomp(), other.ncomp(), "component count mismatch");
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x += y * alpha);
        }
    }

    /// `self − other`.
    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// `self + other`.
    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    /// Weighted Parseval sum `(len²/n⁴) Σₖ w(k) Σ_c |f̂_c(k)|²`.
    pub fn weighted_norm_sq<F>(&self, w: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        let n2 = self.grid.size() as f64;
        let scale = self.grid.len() * self.grid.len() / (n2 * n2);
        let s = det_sum(self.grid.size(), |i| {
            let wi = w(i);
            if wi == 0.0 {
                return 0.0;
            }
            wi * self.comps.iter().map(|c| c[i].norm_sqr()).sum::<f64>()
        });
        scale * s
    }

    /// Weighted real inner product `(len²/n⁴) Σₖ w(k) Σ_c Re(conj(f̂_c) ĝ_c)`.
    pub fn weighted_inner<F>(&self, other: &SpectralField, w: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        assert_eq!(self.ncomp(), other.ncomp(), "component count mismatch");
        let n2 = self.grid.size() as f64;
        let scale = self.grid.len() * self.grid.len() / (n2 * n2);
        let s = det_sum(self.grid.size(), |i| {
            let wi = w(i);
            if wi == 0.0 {
                return 0.0;
            }
            wi * self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| (a[i].conj() * b[i]).re)
                .sum::<f64>()
        });
        scale * s
    }

    /// Discrete L² norm via Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.weighted_norm_sq(|_| 1.0).sqrt()
    }

    /// Discrete L² inner product via Parseval.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.weighted_inner(other, |_| 1.0)
    }

    /// `‖|∇|^s f‖_{L²}` computed with the plain multiplier `|κ|^s`; the zero
    /// mode is excluded.
    pub fn homogeneous_norm(&self, s: f64) -> f64 {
        let grid = &self.grid;
        self.weighted_norm_sq(|i| if i == 0 { 0.0 } else { grid.kappa_sq(i).powf(s) })
            .sqrt()
    }

    /// Inhomogeneous Sobolev norm with weight `(1 + |κ|²)^s`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let grid = &self.grid;
        self.weighted_norm_sq(|i| (1.0 + grid.kappa_sq(i)).powf(s)).sqrt()
    }

    /// Largest `|κ·v̂(k)|` over the lattice for a two-component field.
    pub fn max_divergence(&self) -> f64 {
        assert_eq!(self.ncomp(), 2, "divergence needs a planar vector field");
        let grid = &self.grid;
        det_max(grid.size(), |i| {
            let (k1, k2) = grid.kappa_odd(i);
            (self.comps[0][i] * k1 + self.comps[1][i] * k2).norm()
        })
    }

    /// Largest coefficient magnitude over all components.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| det_max(c.len(), |i| c[i].norm()))
            .fold(0.0, f64::max)
    }

    /// `sqrt(Σ |f̂|²)` over all coefficients, unnormalized.
    pub fn coeff_norm(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| det_sum(c.len(), |i| c[i].norm_sqr()))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest deviation from Hermitian symmetry over all components.
    pub fn hermitian_defect(&self) -> f64 {
        let grid = &self.grid;
        self.comps
            .iter()
            .map(|c| det_max(c.len(), |i| (c[i] - c[grid.neg_index(i)].conj()).norm()))
            .fold(0.0, f64::max)
    }

    /// True when every coefficient is finite.
    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.par_iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// Re-samples onto another grid of the same period by zero-padding or
    /// truncating the spectrum. Truncation drops the target's Nyquist row
    /// and column so the result stays Hermitian.
    pub fn resample(&self, target: &Grid) -> SpectralField {
        assert!(
            (target.len() - self.grid.len()).abs() <= 1e-12 * self.grid.len(),
            "resampling requires equal periods"
        );
        let (n0, n1) = (self.grid.n() as i64, target.n() as i64);
        let limit = n0.min(n1) / 2;
        let scale = (n1 * n1) as f64 / (n0 * n0) as f64;
        let comps = self
            .comps
            .iter()
            .map(|c| {
                let mut out = vec![Complex64::new(0.0, 0.0); target.size()];
                for (i, v) in c.iter().enumerate() {
                    let (k1, k2) = self.grid.mode(i);
                    if k1.abs() >= limit || k2.abs() >= limit {
                        continue;
                    }
                    out[target.index_of(k1, k2)] = v * scale;
                }
                out
            })
            .collect();
        Self::from_comps(target, comps)
    }
}

impl RealField {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        Self {
            grid: grid.clone(),
            comps: vec![vec![0.0; grid.size()]; ncomp],
        }
    }

    pub fn from_comps(grid: &Grid, comps: Vec<Vec<f64>>) -> Self {
        for c in &comps {
            assert_eq!(c.len(), grid.size(), "component does not match grid");
        }
        Self {
            grid: grid.clone(),
            comps,
        }
    }

    /// Samples `f(x₁, x₂)` into an `ncomp`-component field.
    pub fn from_fn<F>(grid: &Grid, ncomp: usize, f: F) -> Self
    where
        F: Fn(f64, f64, &mut [f64]) + Sync,
    {
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; grid.size()]; ncomp];
        let vals: Vec<Vec<f64>> = (0..grid.size())
            .into_par_iter()
            .map(|i| {
                let (x1, x2) = grid.point(i);
                let mut v = vec![0.0; ncomp];
                f(x1, x2, &mut v);
                v
            })
            .collect();
        for (i, v) in vals.into_iter().enumerate() {
            for (c, x) in v.into_iter().enumerate() {
                rows[c][i] = x;
            }
        }
        Self::from_comps(grid, rows)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.comps[i]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Forward transform of every component, pairing components into single
    /// complex FFTs.
    pub fn to_spectral(&self) -> SpectralField {
        let pairs: Vec<(usize, Option<usize>)> = (0..self.ncomp())
            .step_by(2)
            .map(|i| (i, (i + 1 < self.ncomp()).then_some(i + 1)))
            .collect();
        let out: Vec<(Vec<Complex64>, Option<Vec<Complex64>>)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                self.grid
                    .forward_pair(&self.comps[i], j.map(|j| self.comps[j].as_slice()))
            })
            .collect();
        let mut comps = Vec::with_capacity(self.ncomp());
        for (a, b) in out {
            comps.push(a);
            if let Some(b) = b {
                comps.push(b);
            }
        }
        SpectralField {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Discrete L² norm, pointwise Euclidean over components.
    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// Discrete L² inner product.
    pub fn inner(&self, other: &RealField) -> f64 {
        assert_eq!(self.ncomp(), other.ncomp(), "component count mismatch");
        let s = det_sum(self.grid.size(), |i| {
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a[i] * b[i])
                .sum::<f64>()
        });
        s * self.grid.cell_area()
    }

    /// Pointwise Euclidean magnitude over components at flat index `i`.
    pub fn magnitude(&self, i: usize) -> f64 {
        self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()
    }

    /// Discrete `L^p` norm of the pointwise magnitude; `p = ∞` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.linf_norm();
        }
        let s = det_sum(self.grid.size(), |i| {
            let m2: f64 = self.comps.iter().map(|c| c[i] * c[i]).sum();
            if p == 2.0 {
                m2
            } else {
                m2.powf(0.5 * p)
            }
        });
        (s * self.grid.cell_area()).powf(1.0 / p)
    }

    /// Maximum pointwise magnitude.
    pub fn linf_norm(&self) -> f64 {
        det_max(self.grid.size(), |i| self.magnitude(i))
    }

    /// Spatial mean of component `i`.
    pub fn mean(&self, i: usize) -> f64 {
        det_sum(self.grid.size(), |j| self.comps[i][j]) / self.grid.size() as f64
    }

    /// Quadrature `∫ Σ_c f_c` over the torus.
    pub fn integral(&self) -> f64 {
        let s = det_sum(self.grid.size(), |i| self.comps.iter().map(|c| c[i]).sum::<f64>());
        s * self.grid.cell_area()
    }

    /// Largest absolute component value.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| det_max(c.len(), |i| c[i].abs()))
            .fold(0.0, f64::max)
    }

    /// True when every value is finite.
    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.par_iter().all(|v| v.is_finite()))
    }

    /// `self − other`.
    pub fn sub(&self, other: &RealField) -> RealField {
        assert_eq!(self.ncomp(), other.ncomp(), "component count mismatch");
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.par_iter().zip(b.par_iter()).map(|(x, y)| x - y).collect())
            .collect();
        Self::from_comps(&self.grid, comps)
    }
}
