//! Fixtures shared by the engine benchmarks.

use bhp_core::{Domain, ObstacleShape};

/// The unit disc minus the slit `[-0.9, 0] × {0}`.
pub fn slit_domain() -> Domain {
    Domain::new(
        2,
        vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)],
        1.0,
    )
    .expect("slit domain is valid")
}
