//! Named, config-driven experiments. Each scenario runs one or more engines
//! deterministically from its seed and returns [`ReportRow`]s whose pass/fail
//! state follows only from the declared threshold.

pub mod config;
pub mod families;
pub mod report;
mod runners;

use serde::{Deserialize, Serialize};

pub use config::{parse_batch, parse_config, ScenarioConfig};
pub use report::{Artifact, Format, Relation, ReportRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Wos,
    Fd,
    Lattice,
    Quad,
    Qhyp,
}

pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Supported engines; the first is the default.
    pub engines: &'static [Engine],
    pub claims: &'static [&'static str],
}

pub struct ClaimInfo {
    pub tag: &'static str,
    pub statement: &'static str,
}

/// Every claim a report row may cite.
pub const CLAIMS: &[ClaimInfo] = &[
    ClaimInfo {
        tag: "ratio-power-gap",
        statement: "((1+x^2-2x k)/(1+x^2+2x k))^(1+d/2) >= (k-x)/(k+x) on [0, kappa_d]",
    },
    ClaimInfo {
        tag: "reflection-sum-bound",
        statement: "the two-term reflected Poisson sum is at most 2 on [0, kappa_d]^2",
    },
    ClaimInfo {
        tag: "axis-exit-monotone",
        statement: "h_beta(x) >= h_beta(0) on the positive axis",
    },
    ClaimInfo {
        tag: "left-half-exit-bound",
        statement: "h_beta(x) <= h_beta(0) on the left half ball",
    },
    ClaimInfo {
        tag: "conditional-cone-exit-lower-bound",
        statement: "u/v >= h_beta(0) on the positive axis, for every obstacle in the closed left half space",
    },
    ClaimInfo {
        tag: "uniform-ratio-bound",
        statement: "u/v is bounded below on B(0,1/2) in the right half plane by a constant not depending on K",
    },
    ClaimInfo {
        tag: "lattice-cone-exit-lower-bound",
        statement: "a walk conditioned to exit Q(0,N) before hitting K exits in the cone with probability bounded below uniformly in N and K",
    },
    ClaimInfo {
        tag: "lattice-ratio-bound",
        statement: "the discrete conditional exit probabilities are comparable across starting points",
    },
    ClaimInfo {
        tag: "hitting-probability-closed-form",
        statement: "P(hit B(0,delta) before the unit sphere) = (1/|y| - 1)/(1/delta - 1) in three dimensions",
    },
    ClaimInfo {
        tag: "hole-counterexample-scaling",
        statement: "through a hole of radius delta in a flat disc, u_-(y) decays like delta^(d-2), so no uniform ratio bound holds for d >= 3",
    },
    ClaimInfo {
        tag: "quasihyperbolic-ball",
        statement: "in the unit disc, k(0, x) = log(1/(1-|x|))",
    },
    ClaimInfo {
        tag: "qh-exponential-integrability",
        statement: "exp(tau k(., x0)) is integrable for small tau under the boundary condition, and fails to be for large tau",
    },
    ClaimInfo {
        tag: "qh-boundary-condition",
        statement: "k(x, x0) <= C1 log(d(x0)/d(x)) + C2 on the local complement of K",
    },
    ClaimInfo {
        tag: "good-set",
        statement: "K has roots near both hitting angles whose local complements satisfy the boundary condition",
    },
    ClaimInfo {
        tag: "rooted-carleson",
        statement: "u(x) <= c u(w0) near each root, with c independent of the family member",
    },
    ClaimInfo {
        tag: "planar-ratio-bound",
        statement: "for good planar K, (u(x)/v(x))/(u(y)/v(y)) is bounded near the origin, stably across families",
    },
    ClaimInfo {
        tag: "engine-agreement",
        statement: "walk-on-spheres and finite differences agree within their combined error budgets",
    },
];

pub const REGISTRY: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "lemma-grid",
        summary: "exhaustive grids for the two scalar inequalities in every dimension",
        engines: &[Engine::Quad],
        claims: &["ratio-power-gap", "reflection-sum-bound"],
    },
    ScenarioInfo {
        name: "cone-exit",
        summary: "h_beta on the axis and the left half ball by quadrature; u/v at axis points by paired walks",
        engines: &[Engine::Quad],
        claims: &[
            "axis-exit-monotone",
            "left-half-exit-bound",
            "conditional-cone-exit-lower-bound",
        ],
    },
    ScenarioInfo {
        name: "bhp-uniform",
        summary: "min u/v over ten points for each member of an adversarial obstacle family",
        engines: &[Engine::Wos],
        claims: &["uniform-ratio-bound", "conditional-cone-exit-lower-bound"],
    },
    ScenarioInfo {
        name: "masson",
        summary: "lattice conditional exit probabilities, exact and Monte Carlo, over N and K",
        engines: &[Engine::Lattice],
        claims: &["lattice-cone-exit-lower-bound", "lattice-ratio-bound"],
    },
    ScenarioInfo {
        name: "counterexample-d3",
        summary: "three-dimensional hole counterexample: closed-form hitting check and delta scaling",
        engines: &[Engine::Wos],
        claims: &["hitting-probability-closed-form", "hole-counterexample-scaling"],
    },
    ScenarioInfo {
        name: "qhbc-suite",
        summary: "quasihyperbolic distance, exponential integrability and good-set fits",
        engines: &[Engine::Qhyp],
        claims: &[
            "quasihyperbolic-ball",
            "qh-exponential-integrability",
            "qh-boundary-condition",
            "good-set",
        ],
    },
    ScenarioInfo {
        name: "carleson",
        summary: "good-set check and the rooted Carleson constant for two slit families",
        engines: &[Engine::Fd],
        claims: &["good-set", "qh-boundary-condition", "rooted-carleson"],
    },
    ScenarioInfo {
        name: "bhp-2d-general",
        summary: "double ratio near the origin for two good slit families, with Carleson and good-set rows",
        engines: &[Engine::Fd],
        claims: &[
            "good-set",
            "qh-boundary-condition",
            "rooted-carleson",
            "planar-ratio-bound",
        ],
    },
    ScenarioInfo {
        name: "engine-xval",
        summary: "walk-on-spheres against finite differences on paired planar problems",
        engines: &[Engine::Wos],
        claims: &["engine-agreement"],
    },
];

pub fn lookup(name: &str) -> Option<&'static ScenarioInfo> {
    REGISTRY.iter().find(|s| s.name == name)
}

pub fn claim(tag: &str) -> Option<&'static ClaimInfo> {
    CLAIMS.iter().find(|c| c.tag == tag)
}

/// Rows plus any supplementary tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOutput {
    pub rows: Vec<ReportRow>,
    pub artifacts: Vec<Artifact>,
}

impl ScenarioOutput {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Runs one validated scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> crate::Result<ScenarioOutput> {
    runners::run(cfg)
}
