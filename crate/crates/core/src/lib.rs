//! Full-wave electromagnetic simulation of ESIW-fed aperture-coupled patch
//! antennas.
//!
//! The crate covers the whole pipeline for a desk-scale antenna study:
//!
//! - [`geometry`] — parametric solid model of the antenna (both slot
//!   configurations) as an ordered list of axis-aligned primitives, plus
//!   rectangular-waveguide helpers.
//! - [`mesh`] — voxelization of a geometry onto a staggered (Yee) grid with
//!   per-edge material averaging and PEC edge masks.
//! - [`fdtd`] — the leapfrog time-stepping kernel with CPML absorbing
//!   boundaries; the performance-critical core.
//! - [`ports`] — TE10 waveguide mode templates, pulse waveforms, soft-source
//!   injection and modal recording.
//! - [`sim`] — run orchestration: sources, probes, running DFTs on Huygens
//!   surfaces and field planes, energy monitoring and stop rules.
//! - [`postproc`] — S-parameters, bandwidth, near-to-far-field transform,
//!   gain/efficiency tables and field maps.
//! - [`config`] / [`runner`] — the TOML run configuration and the `run`,
//!   `sweep`, `validate` and `mesh-preview` entry points used by the CLI.

pub mod config;
pub mod fdtd;
pub mod geometry;
pub mod io;
pub mod materials;
pub mod mesh;
pub mod ports;
pub mod postproc;
pub mod runner;
pub mod sim;
pub mod validation;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Permittivity of free space (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Permeability of free space (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Impedance of free space (Ohm).
pub const ETA0: f64 = 376.730_313_668;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A geometry or run parameter violates one of its invariants.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    /// A primitive is too thin for the requested grid resolution.
    #[error("under-resolved primitive: {0}")]
    UnderResolved(String),

    /// Geometry does not fit the grid, or two descriptions disagree.
    #[error("bounds mismatch: {0}")]
    BoundsMismatch(String),

    /// Non-finite field value detected during time stepping.
    #[error("instability at step {step}: {component} not finite at ({i}, {j}, {k})")]
    Instability {
        step: usize,
        component: &'static str,
        i: usize,
        j: usize,
        k: usize,
    },

    /// A run ended without meeting its convergence rule and the caller did
    /// not opt into using the truncated records.
    #[error("run did not converge ({0}); pass the override flag to use it anyway")]
    Unconverged(String),

    /// Configuration document problems (unknown key, bad type, bad value).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
