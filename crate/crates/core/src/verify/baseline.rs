//! Constants measured on the reference ensembles (seed 1, 100 samples) and
//! frozen as regression bounds.

/// Allowed growth over a frozen value before a check fails.
pub const MARGIN: f64 = 1.1;

/// `(s, t, max ratio)` of the product law at `n = 128`.
pub const PRODUCT: &[(f64, f64, f64)] = &[
    (0.5, 0.5, 1.081643e-2),
    (0.75, -0.25, 1.071935e-2),
    (-0.25, 0.75, 1.071935e-2),
    (0.9, 0.2, 1.039590e-2),
];

/// `(s, C)` of the L^∞ interpolation bound at `n = 128`.
pub const LINF_INTERP: &[(f64, f64)] = &[(0.25, 1.008628e-2), (0.5, 8.853302e-3), (1.0, 9.403966e-3)];

/// `(s, max ratio)` of the bulk force estimate at `n = 64`.
pub const FORCE: &[(f64, f64)] = &[(0.25, 2.537924e-5), (0.5, 2.531500e-5)];
