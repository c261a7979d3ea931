//! Pseudo-spectral solver for the coupled Q-tensor / Navier-Stokes system on
//! the periodic torus, together with a numerical Littlewood-Paley toolkit and
//! checks for the energy, maximum-principle, uniqueness and Osgood estimates
//! the model satisfies.
//!
//! Module map:
//! - [`spectral`]: grid, transforms, derivatives, Leray projection, `J_n`, dealiasing.
//! - [`qtensor`]: S₀ tensor algebra and every right-hand-side term of the model.
//! - [`paracalc`]: dyadic blocks, Besov/Sobolev norms, Bony and symmetric decompositions.
//! - [`integrator`]: integrating-factor RK2 stepping, runs and twin runs.
//! - [`verify`]: checks that turn trajectories and random ensembles into reports.
//! - [`io`]: configuration, snapshots and CSV series.
//! - [`random`]: seeded band-limited random fields.

pub mod integrator;
pub mod io;
pub mod paracalc;
pub mod qtensor;
pub mod random;
pub mod spectral;
pub mod verify;

pub use integrator::{run, step, twin_run, Probe, TimeConfig, Trajectory, TwinDiff};
pub use paracalc::{DyadicPartition, NormSpec};
pub use qtensor::{ModelParams, QTensorField, State, VelocityField};
pub use spectral::{Axis, Grid, RealField, SpectralField};
