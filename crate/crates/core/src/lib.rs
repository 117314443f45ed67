//! Numerical laboratory for boundary Harnack estimates in a ball with an
//! obstacle removed.
//!
//! The engines are independent of each other:
//!
//! * [`kernel`]: Poisson kernel, cap harmonic measure `h_β`, scalar inequality grids.
//! * [`simulate`]: walk-on-spheres estimators of exit probabilities.
//! * [`lattice`]: exact and Monte Carlo simple random walk exit problems.
//! * [`fdsolver`]: finite-difference Dirichlet solver used as an oracle.
//! * [`qhyp`]: quasihyperbolic distances and boundary-condition fits.
//!
//! [`scenarios`] binds them into named experiments that emit report rows.

pub mod fdsolver;
pub mod geometry;
pub mod kernel;
pub mod lattice;
pub mod qhyp;
pub mod quadrature;
pub mod scenarios;
pub mod simulate;
pub mod stats;

pub use fdsolver::{FdConfig, FdError, Target};
pub use geometry::{ConeSpec, Domain, GeometryError, ObstacleShape, Point, Region};
pub use kernel::{CapSpec, DimensionConstants, KernelError};
pub use lattice::{KGenerator, LatticeError, LatticeNorm, LatticeProblem};
pub use qhyp::{GoodSetConfig, QhError};
pub use scenarios::config::{parse_batch, parse_config, ConfigErrors, ScenarioConfig};
pub use scenarios::report::{write_report, Format, ReportRow};
pub use scenarios::run_scenario;
pub use simulate::{SimError, WosConfig};

/// Any failure of the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    FiniteDifference(#[from] FdError),
    #[error(transparent)]
    Quasihyperbolic(#[from] QhError),
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    /// An engine failed while a scenario was evaluating `claim`.
    #[error("claim {claim}: {source}")]
    Claim {
        claim: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
