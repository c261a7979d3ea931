//! Seeded band-limited random fields.
//!
//! Bands are given in integer lattice wavenumbers `|k| = sqrt(k₁² + k₂²)`,
//! independent of the physical period. Every generated field is Hermitian
//! (real in physical space) and mean-zero.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectral::{Grid, SpectralField};

/// Deterministic generator used across the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Radial power-law band: mode amplitude `∝ |k|^(−slope)` for
/// `k_min ≤ |k| ≤ k_max`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub k_min: f64,
    pub k_max: f64,
    pub slope: f64,
}

impl Spectrum {
    pub fn new(k_min: f64, k_max: f64, slope: f64) -> Self {
        Self { k_min, k_max, slope }
    }

    fn envelope(&self, k1: i64, k2: i64) -> f64 {
        let k = ((k1 * k1 + k2 * k2) as f64).sqrt();
        if k == 0.0 || k < self.k_min || k > self.k_max {
            0.0
        } else {
            k.powf(-self.slope)
        }
    }
}

/// How individual mode amplitudes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    /// Complex Gaussian coefficient scaled by the envelope.
    Gaussian,
    /// Envelope modulus with a uniformly random phase.
    Phase,
}

fn draw_component<R: Rng>(grid: &Grid, spec: &Spectrum, draw: Draw, rng: &mut R) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); grid.size()];
    for i in 0..grid.size() {
        let j = grid.neg_index(i);
        if j < i {
            continue;
        }
        let (k1, k2) = grid.mode(i);
        let env = spec.envelope(k1, k2);
        if env == 0.0 {
            continue;
        }
        let v = match draw {
            Draw::Gaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * env
            }
            Draw::Phase => {
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Complex64::from_polar(env, th)
            }
        };
        if i == j {
            c[i] = Complex64::new(v.re, 0.0);
        } else {
            c[i] = v;
            c[j] = v.conj();
        }
    }
    c
}

/// Normalizes so that the root-mean-square magnitude `‖f‖_{L²}/len` equals `rms`.
fn normalize(mut f: SpectralField, rms: f64) -> SpectralField {
    let norm = f.l2_norm() / f.grid().len();
    if norm > 0.0 {
        f = f.scaled(rms / norm);
    }
    f
}

/// Random `ncomp`-component field with the given band and RMS magnitude.
pub fn random_field<R: Rng>(
    grid: &Grid,
    ncomp: usize,
    spec: &Spectrum,
    draw: Draw,
    rms: f64,
    rng: &mut R,
) -> SpectralField {
    let comps = (0..ncomp).map(|_| draw_component(grid, spec, draw, rng)).collect();
    normalize(SpectralField::from_comps(grid, comps), rms)
}

/// Random divergence-free planar velocity `(−∂₂ψ, ∂₁ψ)` built from a random
/// stream function whose gradient has the requested band.
pub fn random_solenoidal<R: Rng>(
    grid: &Grid,
    spec: &Spectrum,
    draw: Draw,
    rms: f64,
    rng: &mut R,
) -> SpectralField {
    let psi = draw_component(grid, spec, draw, rng);
    let mut c1 = vec![Complex64::new(0.0, 0.0); grid.size()];
    let mut c2 = vec![Complex64::new(0.0, 0.0); grid.size()];
    for i in 0..grid.size() {
        let (k1, k2) = grid.kappa_odd(i);
        let kk = (k1 * k1 + k2 * k2).sqrt();
        if kk == 0.0 {
            continue;
        }
        // Divide by |κ| so the velocity spectrum follows the envelope.
        let p = psi[i] / kk;
        c1[i] = -Complex64::new(0.0, k2) * p;
        c2[i] = Complex64::new(0.0, k1) * p;
    }
    normalize(SpectralField::from_comps(grid, vec![c1, c2]), rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_are_real_mean_zero_and_banded() {
        let g = Grid::standard(32).unwrap();
        let spec = Spectrum::new(1.0, 6.0, 1.0);
        let f = random_field(&g, 3, &spec, Draw::Gaussian, 0.7, &mut rng(3));
        assert!(f.hermitian_defect() < 1e-15);
        for c in 0..3 {
            assert_eq!(f.mean(c), 0.0);
        }
        assert!((f.l2_norm() / g.len() - 0.7).abs() < 1e-12);
        for i in 0..g.size() {
            let (a, b) = g.mode(i);
            if ((a * a + b * b) as f64).sqrt() > 6.0 {
                assert_eq!(f.comp(0)[i].norm(), 0.0);
            }
        }
    }

    #[test]
    fn solenoidal_is_divergence_free() {
        let g = Grid::standard(32).unwrap();
        let u = random_solenoidal(&g, &Spectrum::new(1.0, 8.0, 0.5), Draw::Phase, 1.0, &mut rng(9));
        assert!(u.max_divergence() <= 1e-12 * u.coeff_norm());
        assert!(u.hermitian_defect() < 1e-15);
    }

    #[test]
    fn seeds_are_reproducible() {
        let g = Grid::standard(16).unwrap();
        let s = Spectrum::new(1.0, 4.0, 0.0);
        let a = random_field(&g, 1, &s, Draw::Gaussian, 1.0, &mut rng(5));
        let b = random_field(&g, 1, &s, Draw::Gaussian, 1.0, &mut rng(5));
        assert_eq!(a.comp(0), b.comp(0));
    }
}
