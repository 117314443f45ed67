//! Walk-on-spheres simulation of Brownian exit from `D = B(0, R) - K`.
//!
//! Paths are grouped in fixed batches; batch `i` draws from ChaCha stream `i`
//! of the run seed, and batches are reduced by integer addition. The result of
//! an ensemble is therefore a function of `(config, seed)` alone, whatever the
//! number of rayon workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{norm, ConeSpec, Domain, GeometryError, Point, Region};
use crate::stats::{derive_seed, wilson, Z95};

/// Paths simulated per RNG stream.
pub const BATCH_SIZE: u64 = 1024;

/// Largest tolerated censored fraction of an ensemble.
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid walk configuration: {0}")]
    InvalidConfig(String),
    #[error("start point {0} is not inside the domain (or within the capture shell)")]
    StartOutsideDomain(Point),
    #[error("start point {0} violates the estimator's precondition: {1}")]
    BadQueryPoint(Point, &'static str),
    #[error("{censored} of {n} paths exhausted the step budget (more than 1%)")]
    TooManyCensored { censored: u64, n: u64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One reproducible random stream: `(seed, stream_index)` fixes the sequence.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self {
            seed,
            stream_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    #[inline]
    pub fn bits(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn below(&mut self, n: u32) -> u32 {
        self.rng.random_range(0..n)
    }

    /// Fills `out` with a uniform point of the unit sphere of `R^{out.len()}`.
    #[inline]
    pub fn unit_vector(&mut self, out: &mut [f64]) {
        if out.len() == 2 {
            let (s, c) = (std::f64::consts::TAU * self.uniform()).sin_cos();
            out[0] = c;
            out[1] = s;
            return;
        }
        loop {
            let mut r2 = 0.0;
            for v in out.iter_mut() {
                *v = self.normal();
                r2 += *v * *v;
            }
            if r2 > 1e-300 {
                let inv = r2.sqrt().recip();
                out.iter_mut().for_each(|v| *v *= inv);
                return;
            }
        }
    }
}

/// Uniform draw from the unit `(d-1)`-sphere.
pub fn sample_unit_sphere(rng: &mut RngStream, d: usize) -> Point {
    let mut c = vec![0.0; d];
    rng.unit_vector(&mut c);
    Point::new(c).expect("dimension validated by caller")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WosConfig {
    /// Capture distance to `∂D`.
    pub shell_eps: f64,
    pub max_steps: u64,
    pub n_paths: u64,
    /// Fraction of the inscribed radius used per jump.
    pub safety_factor: f64,
}

impl Default for WosConfig {
    fn default() -> Self {
        Self {
            shell_eps: 1e-5,
            max_steps: 100_000,
            n_paths: 100_000,
            safety_factor: 1.0,
        }
    }
}

impl WosConfig {
    pub fn with_paths(n_paths: u64) -> Self {
        Self {
            n_paths,
            ..Self::default()
        }
    }

    pub fn validate(&self, outer_radius: f64) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.shell_eps > 0.0 && self.shell_eps < 1e-2 * outer_radius) {
            return bad(format!(
                "shell_eps {} must lie in (0, 0.01 * outer_radius)",
                self.shell_eps
            ));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return bad(format!(
                "safety_factor {} must lie in (0, 1]",
                self.safety_factor
            ));
        }
        if self.max_steps == 0 || self.n_paths == 0 {
            return bad("max_steps and n_paths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Sphere,
    Obstacle,
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRecord {
    pub kind: ExitKind,
    /// Radial projection of the final position onto the outer sphere when
    /// `kind == Sphere`, otherwise the final position.
    pub exit_point: Point,
    pub steps: u64,
}

/// Runs one walk from `start` and writes its final position into `pos`.
/// Within the shell of both the sphere and `K` the walk counts as absorbed by
/// `K`.
#[inline]
fn walk(dom: &Domain, cfg: &WosConfig, rng: &mut RngStream, pos: &mut [f64], dir: &mut [f64]) -> (ExitKind, u64) {
    let outer = dom.outer_radius();
    for step in 0..cfg.max_steps {
        let r_k = dom.obstacle_distance(pos);
        if r_k <= cfg.shell_eps {
            return (ExitKind::Obstacle, step);
        }
        let rad = norm(pos);
        let r_s = outer - rad;
        if r_s <= cfg.shell_eps {
            let s = outer / rad;
            pos.iter_mut().for_each(|c| *c *= s);
            return (ExitKind::Sphere, step);
        }
        let r = cfg.safety_factor * r_s.min(r_k);
        rng.unit_vector(dir);
        for (c, u) in pos.iter_mut().zip(dir.iter()) {
            *c += r * u;
        }
    }
    (ExitKind::Censored, cfg.max_steps)
}

fn check_start(start: &Point, dom: &Domain, cfg: &WosConfig) -> Result<(), SimError> {
    let r = dom.wos_radius(start)?;
    if r <= cfg.shell_eps {
        return Err(SimError::StartOutsideDomain(start.clone()));
    }
    Ok(())
}

/// One walk-on-spheres path from `start` to the `shell_eps`-neighbourhood of `∂D`.
pub fn wos_exit(
    start: &Point,
    dom: &Domain,
    cfg: &WosConfig,
    rng: &mut RngStream,
) -> Result<ExitRecord, SimError> {
    cfg.validate(dom.outer_radius())?;
    check_start(start, dom, cfg)?;
    let mut pos = start.to_vec();
    let mut dir = vec![0.0; start.dim()];
    let (kind, steps) = walk(dom, cfg, rng, &mut pos, &mut dir);
    Ok(ExitRecord {
        kind,
        exit_point: Point::new(pos).expect("finite walk"),
        steps,
    })
}

/// Integer tallies of an ensemble of exits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExitCensus {
    pub n: u64,
    pub sphere: u64,
    pub obstacle: u64,
    pub censored: u64,
    /// Sphere exits whose exit point satisfies the target predicate.
    pub sphere_in_target: u64,
    pub total_steps: u64,
}

impl ExitCensus {
    fn add(mut self, o: Self) -> Self {
        self.n += o.n;
        self.sphere += o.sphere;
        self.obstacle += o.obstacle;
        self.censored += o.censored;
        self.sphere_in_target += o.sphere_in_target;
        self.total_steps += o.total_steps;
        self
    }

    pub fn check_censoring(&self) -> Result<(), SimError> {
        if self.censored as f64 > MAX_CENSORED_FRACTION * self.n as f64 {
            return Err(SimError::TooManyCensored {
                censored: self.censored,
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Runs `cfg.n_paths` walks from `start` and tallies exit kinds; sphere exits
/// are additionally tested against `target`.
pub fn exit_census<T>(
    start: &Point,
    dom: &Domain,
    cfg: &WosConfig,
    seed: u64,
    target: T,
) -> Result<ExitCensus, SimError>
where
    T: Fn(&[f64]) -> bool + Sync,
{
    cfg.validate(dom.outer_radius())?;
    check_start(start, dom, cfg)?;
    let batches = cfg.n_paths.div_ceil(BATCH_SIZE);
    let census = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(seed, b);
            let count = BATCH_SIZE.min(cfg.n_paths - b * BATCH_SIZE);
            let mut pos = vec![0.0; start.dim()];
            let mut dir = vec![0.0; start.dim()];
            let mut c = ExitCensus {
                n: count,
                ..Default::default()
            };
            for _ in 0..count {
                pos.copy_from_slice(start);
                let (kind, steps) = walk(dom, cfg, &mut rng, &mut pos, &mut dir);
                c.total_steps += steps;
                match kind {
                    ExitKind::Sphere => {
                        c.sphere += 1;
                        if target(&pos) {
                            c.sphere_in_target += 1;
                        }
                    }
                    ExitKind::Obstacle => c.obstacle += 1,
                    ExitKind::Censored => c.censored += 1,
                }
            }
            c
        })
        .reduce(ExitCensus::default, ExitCensus::add);
    Ok(census)
}

/// Paired estimates of `v(x) = P^x(X_τ ∈ ∂B)` and `u(x) = P^x(X_τ ∈ ∂B ∩ W)`
/// from one ensemble of paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedEstimate {
    pub n: u64,
    pub count_u: u64,
    pub count_v: u64,
    pub u_hat: f64,
    pub v_hat: f64,
    pub ci_u: (f64, f64),
    pub ci_v: (f64, f64),
    pub censored: u64,
}

impl PairedEstimate {
    pub fn from_counts(n: u64, count_u: u64, count_v: u64, censored: u64) -> Self {
        Self {
            n,
            count_u,
            count_v,
            u_hat: count_u as f64 / n as f64,
            v_hat: count_v as f64 / n as f64,
            ci_u: wilson(count_u, n, Z95),
            ci_v: wilson(count_v, n, Z95),
            censored,
        }
    }

    pub fn sigma_u(&self) -> f64 {
        crate::stats::binomial_sigma(self.count_u, self.n)
    }

    pub fn sigma_v(&self) -> f64 {
        crate::stats::binomial_sigma(self.count_v, self.n)
    }

    /// `û / v̂`, the fraction of sphere exits that land in the cone.
    pub fn ratio(&self) -> f64 {
        if self.count_v == 0 {
            f64::NAN
        } else {
            self.count_u as f64 / self.count_v as f64
        }
    }

    /// Binomial standard error of [`ratio`](Self::ratio) given `count_v`.
    pub fn ratio_sigma(&self) -> f64 {
        crate::stats::binomial_sigma(self.count_u, self.count_v)
    }

    pub fn ratio_ci(&self) -> (f64, f64) {
        wilson(self.count_u, self.count_v, Z95)
    }
}

pub fn estimate_uv(
    start: &Point,
    dom: &Domain,
    cone: &ConeSpec,
    cfg: &WosConfig,
    seed: u64,
) -> Result<PairedEstimate, SimError> {
    if cone.axis() >= dom.dim() {
        return Err(GeometryError::InvalidAxis {
            axis: cone.axis(),
            dim: dom.dim(),
        }
        .into());
    }
    let c = exit_census(start, dom, cfg, seed, |p| cone.contains(p))?;
    c.check_censoring()?;
    Ok(PairedEstimate::from_counts(
        c.n,
        c.sphere_in_target,
        c.sphere,
        c.censored,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub point: Point,
    pub estimate: PairedEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioBoundReport {
    pub rows: Vec<RatioRow>,
    /// `max_{x,y} (u(x)/v(x)) / (u(y)/v(y))`
    pub worst_double_ratio: f64,
    /// Delta-method 95% interval on the worst double ratio.
    pub ci: (f64, f64),
    pub worst_pair: (usize, usize),
}

impl RatioBoundReport {
    pub fn min_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.estimate.ratio())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-point paired estimates and the worst pairwise double ratio over
/// points of `B(0, 1/2) ∩ H_+ ∩ D`. Point `i` uses sub-seed `derive_seed(seed, i)`.
pub fn estimate_ratio_bound(
    points: &[Point],
    dom: &Domain,
    cone: &ConeSpec,
    cfg: &WosConfig,
    seed: u64,
) -> Result<RatioBoundReport, SimError> {
    for p in points {
        if p.dim() != dom.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: dom.dim(),
                got: p.dim(),
            }
            .into());
        }
        if !(p.norm() < 0.5 && p[0] > 0.0) {
            return Err(SimError::BadQueryPoint(p.clone(), "must lie in B(0,1/2) with x_1 > 0"));
        }
        if !dom.contains(p) {
            return Err(SimError::StartOutsideDomain(p.clone()));
        }
    }
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let estimate = estimate_uv(p, dom, cone, cfg, derive_seed(seed, i as u64))?;
        rows.push(RatioRow {
            point: p.clone(),
            estimate,
        });
    }
    let (mut hi, mut lo) = (0usize, 0usize);
    for (i, r) in rows.iter().enumerate() {
        if r.estimate.ratio() > rows[hi].estimate.ratio() {
            hi = i;
        }
        if r.estimate.ratio() < rows[lo].estimate.ratio() {
            lo = i;
        }
    }
    let (worst, ci) = if rows.is_empty() {
        (1.0, (1.0, 1.0))
    } else {
        let (a, b) = (&rows[hi].estimate, &rows[lo].estimate);
        let worst = a.ratio() / b.ratio();
        let log_var = |e: &PairedEstimate| {
            let q = e.ratio();
            (1.0 - q) / (q * e.count_v as f64)
        };
        let s = if hi == lo {
            0.0
        } else {
            (log_var(a) + log_var(b)).sqrt()
        };
        (worst, (worst * (-Z95 * s).exp(), worst * (Z95 * s).exp()))
    };
    Ok(RatioBoundReport {
        rows,
        worst_double_ratio: worst,
        ci,
        worst_pair: (hi, lo),
    })
}

/// Probability of reaching `K` before the outer sphere.
pub fn estimate_hit(
    start: &Point,
    dom: &Domain,
    cfg: &WosConfig,
    seed: u64,
) -> Result<crate::stats::Proportion, SimError> {
    let c = exit_census(start, dom, cfg, seed, |_| false)?;
    c.check_censoring()?;
    Ok(crate::stats::Proportion::new(c.obstacle, c.n))
}

/// `d(start, ∂D)`, used by callers that need the start-point precondition.
pub fn start_clearance(start: &Point, dom: &Domain) -> f64 {
    dom.boundary_distance(start)
}
