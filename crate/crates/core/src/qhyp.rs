//! Planar quasihyperbolic metric `k_Ω(x, y) = inf_γ ∫_γ ds / d(z, ∂Ω)`,
//! approximated by shortest paths on a lattice graph.
//!
//! Nodes are the points of `hZ²` inside `Ω`. Each node links to the lattice
//! points `±(a, b)·h` with `(a, b)` coprime and `|a|, |b| ≤ 3`, 32 directions
//! in all, which keeps the angular error of graph geodesics small. An edge
//! `pq` exists when the open balls `B(p, d(p))` and `B(q, d(q))` cover it, so it
//! stays inside `Ω`; edges longer than a diagonal additionally need
//! `min(d(p), d(q)) ≥ |p − q|`. Edge weights are two-point Gauss–Legendre
//! rules for `∫ ds / d`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist, BallRegion, Domain, ObstacleShape, Point, Region};
use crate::stats::linear_fit;

/// Upper bound on lattice points per graph.
pub const MAX_NODES: usize = 40_000_000;
/// Fine/coarse ratio of the cell sum at or above which the integral is
/// declared divergent.
pub const DIVERGENCE_RATIO: f64 = 1.5;
pub const MIN_FIT_SAMPLES: usize = 100;
pub const MIN_FIT_DECADES: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QhError {
    #[error("the quasihyperbolic graph is planar; got dimension {0}")]
    UnsupportedDimension(usize),
    #[error("lattice spacing {0} must be positive and finite")]
    BadSpacing(f64),
    #[error("graph would need {0} lattice points (limit {MAX_NODES})")]
    TooManyNodes(usize),
    #[error("point {0} is not inside the region")]
    OutsideRegion(Point),
    #[error("no graph node is visible from {0}")]
    NoNearbyNode(Point),
    #[error("points {0} and {1} lie in different components")]
    Disconnected(Point, Point),
    #[error("a fit needs one sample or at least {MIN_FIT_SAMPLES}; got {0}")]
    InsufficientSamples(usize),
    #[error("sample distances span {decades:.3} decades; at least {MIN_FIT_DECADES} needed")]
    InsufficientRange { decades: f64 },
    #[error("tau must be non-negative and finite, got {0}")]
    BadTau(f64),
    #[error("r and eps must lie in (0, 1); got r = {r}, eps = {eps}")]
    BadRadius { r: f64, eps: f64 },
    #[error("the circle of radius r(1 ± eps) does not meet K")]
    NoHittingAngles,
    #[error("no point of K within r*eps of r*exp(i*theta) for theta = {0}")]
    RootNotFound(f64),
}

const OFFSETS: [(i64, i64); 32] = {
    let base = [
        (1, 0),
        (0, 1),
        (1, 1),
        (1, -1),
        (2, 1),
        (1, 2),
        (2, -1),
        (1, -2),
        (3, 1),
        (1, 3),
        (3, -1),
        (1, -3),
        (3, 2),
        (2, 3),
        (3, -2),
        (2, -3),
    ];
    let mut out = [(0, 0); 32];
    let mut i = 0;
    while i < 16 {
        out[2 * i] = base[i];
        out[2 * i + 1] = (-base[i].0, -base[i].1);
        i += 1;
    }
    out
};

/// Gauss–Legendre nodes on `[0, 1]` (two points).
const GL_LO: f64 = 0.5 - 0.288_675_134_594_812_9;
const GL_HI: f64 = 0.5 + 0.288_675_134_594_812_9;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// `∫ ds / d` along the segment `a → b` by composite two-point rules with
/// panels no longer than a quarter of the smaller endpoint distance.
fn segment_cost<R: Region + ?Sized>(region: &R, a: &[f64], b: &[f64], da: f64, db: f64) -> f64 {
    let len = dist(a, b);
    if len == 0.0 {
        return 0.0;
    }
    let panels = ((len / (0.25 * da.min(db))).ceil() as usize).clamp(1, 4096);
    let mut acc = 0.0;
    let mut z = [0.0; 2];
    for k in 0..panels {
        for g in [GL_LO, GL_HI] {
            let t = (k as f64 + g) / panels as f64;
            z[0] = a[0] + t * (b[0] - a[0]);
            z[1] = a[1] + t * (b[1] - a[1]);
            acc += 1.0 / region.boundary_distance(&z);
        }
    }
    acc * 0.5 * len / panels as f64
}

/// Lattice graph of a planar region at spacing `h`.
pub struct QhGraph<'a, R: Region + ?Sized> {
    region: &'a R,
    h: f64,
    i0: i64,
    j0: i64,
    nx: usize,
    ny: usize,
    /// `d(node, ∂Ω)`, 0 outside `Ω`.
    d: Vec<f64>,
}

impl<'a, R: Region + ?Sized> QhGraph<'a, R> {
    pub fn new(region: &'a R, h: f64) -> Result<Self, QhError> {
        if region.dim() != 2 {
            return Err(QhError::UnsupportedDimension(region.dim()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(QhError::BadSpacing(h));
        }
        let (lo, hi) = region.bounding_box();
        let i0 = (lo[0] / h).floor() as i64;
        let j0 = (lo[1] / h).floor() as i64;
        let nx = ((hi[0] / h).ceil() as i64 - i0 + 1) as usize;
        let ny = ((hi[1] / h).ceil() as i64 - j0 + 1) as usize;
        let total = nx.saturating_mul(ny);
        if total > MAX_NODES {
            return Err(QhError::TooManyNodes(total));
        }
        let mut d = vec![0.0; total];
        for j in 0..ny {
            for i in 0..nx {
                let p = [(i0 + i as i64) as f64 * h, (j0 + j as i64) as f64 * h];
                d[j * nx + i] = region.boundary_distance(&p);
            }
        }
        Ok(Self {
            region,
            h,
            i0,
            j0,
            nx,
            ny,
            d,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.d.iter().filter(|&&d| d > 0.0).count()
    }

    #[inline]
    fn coords(&self, n: usize) -> [f64; 2] {
        [
            (self.i0 + (n % self.nx) as i64) as f64 * self.h,
            (self.j0 + (n / self.nx) as i64) as f64 * self.h,
        ]
    }

    #[inline]
    fn shifted(&self, n: usize, (a, b): (i64, i64)) -> Option<usize> {
        let i = (n % self.nx) as i64 + a;
        let j = (n / self.nx) as i64 + b;
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        Some(j as usize * self.nx + i as usize)
    }

    /// Weight of the edge `n → m` along offset `off`, or `None` if absent.
    /// Computed from the lower-numbered end so both directions agree bitwise.
    #[inline]
    fn edge(&self, n: usize, m: usize, off: (i64, i64)) -> Option<f64> {
        let (dn, dm) = (self.d[n], self.d[m]);
        if dm <= 0.0 {
            return None;
        }
        let len = self.h * ((off.0 * off.0 + off.1 * off.1) as f64).sqrt();
        // Strict with a margin: touching balls may meet on a zero-width slit.
        if dn + dm <= len * (1.0 + 1e-9) {
            return None;
        }
        if off.0.abs() + off.1.abs() > 2 && dn.min(dm) < len {
            return None;
        }
        let (a, b) = if n < m { (n, m) } else { (m, n) };
        let (pa, pb) = (self.coords(a), self.coords(b));
        let mut w = 0.0;
        for g in [GL_LO, GL_HI] {
            let z = [pa[0] + g * (pb[0] - pa[0]), pa[1] + g * (pb[1] - pa[1])];
            let dz = self.region.boundary_distance(&z);
            if dz <= 0.0 {
                return None;
            }
            w += 1.0 / dz;
        }
        Some(0.5 * len * w)
    }

    /// Nearest node whose straight segment to `x` stays in `Ω`, with the cost
    /// of that segment.
    fn attach(&self, x: &Point) -> Result<(usize, f64), QhError> {
        let dx = self.region.boundary_distance(x);
        if dx <= 0.0 {
            return Err(QhError::OutsideRegion(x.clone()));
        }
        let ci = (x[0] / self.h).round() as i64 - self.i0;
        let cj = (x[1] / self.h).round() as i64 - self.j0;
        let mut cands = Vec::new();
        for dj in -3..=3 {
            for di in -3..=3 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                    continue;
                }
                let n = j as usize * self.nx + i as usize;
                if self.d[n] <= 0.0 {
                    continue;
                }
                let p = self.coords(n);
                let l = dist(x, &p);
                if dx + self.d[n] > l * (1.0 + 1e-9) {
                    cands.push((l, n));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let &(_, n) = cands
            .first()
            .ok_or_else(|| QhError::NoNearbyNode(x.clone()))?;
        let p = self.coords(n);
        Ok((n, segment_cost(self.region, x, &p, dx, self.d[n])))
    }

    /// Dijkstra from `source`; stops early once `stop` is settled.
    fn dijkstra(&self, source: usize, start_cost: f64, stop: Option<usize>) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.d.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = start_cost;
        heap.push(Entry(start_cost, source));
        while let Some(Entry(c, n)) = heap.pop() {
            if c > dist[n] {
                continue;
            }
            if Some(n) == stop {
                break;
            }
            for off in OFFSETS {
                let Some(m) = self.shifted(n, off) else {
                    continue;
                };
                if let Some(w) = self.edge(n, m, off) {
                    let nc = c + w;
                    if nc < dist[m] {
                        dist[m] = nc;
                        heap.push(Entry(nc, m));
                    }
                }
            }
        }
        dist
    }

    /// Distances from `x0` to every node of its component.
    pub fn field(&self, x0: &Point) -> Result<QhField<'_, 'a, R>, QhError> {
        let (n, c) = self.attach(x0)?;
        Ok(QhField {
            graph: self,
            source: x0.clone(),
            dist: self.dijkstra(n, c, None),
        })
    }

    /// Graph distance between two points; the endpoints are put in a fixed
    /// order first so that swapping them gives the identical value.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64, QhError> {
        if x == y {
            return Ok(0.0);
        }
        let (a, b) = if x.coords().iter().map(|c| c.to_bits()).lt(y.coords().iter().map(|c| c.to_bits())) {
            (x, y)
        } else {
            (y, x)
        };
        let (na, ca) = self.attach(a)?;
        let (nb, cb) = self.attach(b)?;
        let dist = self.dijkstra(na, ca, Some(nb));
        if !dist[nb].is_finite() {
            return Err(QhError::Disconnected(a.clone(), b.clone()));
        }
        Ok(dist[nb] + cb)
    }
}

/// Single-source quasihyperbolic distances on a graph.
pub struct QhField<'g, 'a, R: Region + ?Sized> {
    graph: &'g QhGraph<'a, R>,
    pub source: Point,
    dist: Vec<f64>,
}

impl<R: Region + ?Sized> QhField<'_, '_, R> {
    /// `k(source, x)`.
    pub fn at(&self, x: &Point) -> Result<f64, QhError> {
        let (n, c) = self.graph.attach(x)?;
        let k = self.dist[n];
        if !k.is_finite() {
            return Err(QhError::Disconnected(self.source.clone(), x.clone()));
        }
        Ok(k + c)
    }

    /// `(coords, d, k)` for every node reached from the source.
    pub fn nodes(&self) -> impl Iterator<Item = ([f64; 2], f64, f64)> + '_ {
        (0..self.dist.len())
            .filter(|&n| self.dist[n].is_finite())
            .map(|n| (self.graph.coords(n), self.graph.d[n], self.dist[n]))
    }

    /// `Σ exp(τ k) h²` over reached nodes.
    pub fn exp_sum(&self, tau: f64) -> f64 {
        let h2 = self.graph.h * self.graph.h;
        self.dist
            .iter()
            .filter(|k| k.is_finite())
            .map(|k| (tau * k).exp() * h2)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QhDistance {
    pub value: f64,
    /// The same distance at spacing `2h`.
    pub coarse_value: f64,
    pub estimate: f64,
}

pub fn qh_distance<R: Region + ?Sized>(
    omega: &R,
    x: &Point,
    y: &Point,
    h: f64,
) -> Result<QhDistance, QhError> {
    let value = QhGraph::new(omega, h)?.distance(x, y)?;
    let coarse_value = QhGraph::new(omega, 2.0 * h)?.distance(x, y)?;
    Ok(QhDistance {
        value,
        coarse_value,
        estimate: (value - coarse_value).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QhbcFit {
    pub c1: f64,
    pub c2: f64,
    /// Intercept of the least-squares line.
    pub c2_ls: f64,
    /// Height of the envelope above the least-squares line.
    pub max_violation: f64,
    pub n_samples: usize,
    pub decades: f64,
}

/// Fits `k ≤ C1 log(d0 / d) + C2` to `(d, k)` samples: `C1` is the
/// least-squares slope and `C2` the smallest intercept putting every sample
/// under the line.
pub fn fit_qhbc(d0: f64, samples: &[(f64, f64)]) -> Result<QhbcFit, QhError> {
    match samples.len() {
        1 => {
            let k = samples[0].1;
            return Ok(QhbcFit {
                c1: 0.0,
                c2: k,
                c2_ls: k,
                max_violation: 0.0,
                n_samples: 1,
                decades: 0.0,
            });
        }
        n if n < MIN_FIT_SAMPLES => return Err(QhError::InsufficientSamples(n)),
        _ => {}
    }
    let (dmin, dmax) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), s| (a.min(s.0), b.max(s.0)));
    let decades = (dmax / dmin).log10();
    if !(decades >= MIN_FIT_DECADES - 1e-9) {
        return Err(QhError::InsufficientRange { decades });
    }
    let l: Vec<f64> = samples.iter().map(|s| (d0 / s.0).ln()).collect();
    let k: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (c1, c2_ls) = linear_fit(&l, &k);
    let c2 = l
        .iter()
        .zip(&k)
        .map(|(l, k)| k - c1 * l)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(QhbcFit {
        c1,
        c2,
        c2_ls,
        max_violation: c2 - c2_ls,
        n_samples: samples.len(),
        decades,
    })
}

pub fn qhbc_fit<R: Region + ?Sized>(
    omega: &R,
    x0: &Point,
    samples: &[Point],
    h: f64,
) -> Result<QhbcFit, QhError> {
    let g = QhGraph::new(omega, h)?;
    let field = g.field(x0)?;
    let d0 = omega.boundary_distance(x0);
    let pairs = samples
        .iter()
        .map(|p| Ok((omega.boundary_distance(p), field.at(p)?)))
        .collect::<Result<Vec<_>, QhError>>()?;
    fit_qhbc(d0, &pairs)
}

/// Worst-case samples: the node of largest `k` in each of `bins` logarithmic
/// bins of `d` over `[d_min, d0]`.
pub fn envelope_samples<R: Region + ?Sized>(
    field: &QhField<'_, '_, R>,
    d0: f64,
    d_min: f64,
    bins: usize,
) -> Vec<(f64, f64)> {
    let span = (d0 / d_min).ln();
    let mut best: Vec<Option<(f64, f64)>> = vec![None; bins];
    for (_, d, k) in field.nodes() {
        if d < d_min || d > d0 {
            continue;
        }
        let b = (((d0 / d).ln() / span) * bins as f64) as usize;
        let slot = &mut best[b.min(bins - 1)];
        if slot.is_none_or(|(_, kk)| k > kk) {
            *slot = Some((d, k));
        }
    }
    best.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsIntegral {
    pub tau: f64,
    /// Cell sum at spacing `h / 2`.
    pub value: f64,
    /// Cell sum at spacing `h`.
    pub coarse_value: f64,
    pub ratio: f64,
    pub diverges: bool,
}

impl SsIntegral {
    fn from_sums(tau: f64, fine: f64, coarse: f64) -> Self {
        let ratio = fine / coarse;
        Self {
            tau,
            value: fine,
            coarse_value: coarse,
            ratio,
            diverges: !ratio.is_finite() || ratio >= DIVERGENCE_RATIO,
        }
    }
}

/// `∫_Ω exp(τ k(x, x0)) dx` as cell sums at spacings `h` and `h/2`.
pub fn ss_integral<R: Region + ?Sized>(
    omega: &R,
    x0: &Point,
    tau: f64,
    h: f64,
) -> Result<SsIntegral, QhError> {
    Ok(ss_sweep(omega, x0, &[tau], h)?.remove(0))
}

/// [`ss_integral`] for several `τ` from one pair of graph solves.
pub fn ss_sweep<R: Region + ?Sized>(
    omega: &R,
    x0: &Point,
    taus: &[f64],
    h: f64,
) -> Result<Vec<SsIntegral>, QhError> {
    if let Some(&t) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(QhError::BadTau(t));
    }
    let coarse_g = QhGraph::new(omega, h)?;
    let coarse = coarse_g.field(x0)?;
    let fine_g = QhGraph::new(omega, 0.5 * h)?;
    let fine = fine_g.field(x0)?;
    Ok(taus
        .iter()
        .map(|&t| SsIntegral::from_sums(t, fine.exp_sum(t), coarse.exp_sum(t)))
        .collect())
}

/// Largest `τ` of a sweep whose integral is not flagged divergent.
pub fn largest_stable_tau(sweep: &[SsIntegral]) -> Option<f64> {
    sweep
        .iter()
        .filter(|s| !s.diverges)
        .map(|s| s.tau)
        .fold(None, |a, t| Some(a.map_or(t, |a: f64| a.max(t))))
}

fn circle_point(r: f64, theta: f64) -> [f64; 2] {
    [r * theta.cos(), r * theta.sin()]
}

fn obstacle_distance(k: &[ObstacleShape], p: &[f64]) -> f64 {
    k.iter().map(|o| o.distance(p)).fold(f64::INFINITY, f64::min)
}

/// First angle, scanning away from 0 in direction `sign`, at which the disc
/// `B̄(r e^{iθ}, rε)` meets `K`.
fn first_hit(k: &[ObstacleShape], r: f64, eps: f64, sign: f64) -> Option<f64> {
    let hit = |t: f64| obstacle_distance(k, &circle_point(r, sign * t)) <= r * eps;
    let step = (eps / 4.0).min(1e-3);
    let n = (2.0 * std::f64::consts::PI / step).ceil() as usize;
    let mut prev = 0.0;
    for j in 1..n {
        let t = j as f64 * step;
        if hit(t) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if hit(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(sign * hi);
        }
        prev = t;
    }
    None
}

/// `θ1 = inf{θ ∈ (0, 2π) : B̄(re^{iθ}, rε) ∩ K ≠ ∅}` and `θ2`, the analogous
/// supremum over `(−2π, 0)`.
pub fn hitting_angles(k: &[ObstacleShape], r: f64, eps: f64) -> Option<(f64, f64)> {
    if !(r > 0.0 && r < 1.0 && eps > 0.0 && eps < 1.0) {
        return None;
    }
    Some((first_hit(k, r, eps, 1.0)?, first_hit(k, r, eps, -1.0)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoodSetConfig {
    /// Decades of `d` covered by the fit samples.
    pub decades: f64,
    /// Smallest sampled `d`, in lattice spacings.
    pub min_d_over_h: f64,
    pub bins: usize,
    pub max_c1: f64,
    pub max_violation: f64,
}

impl Default for GoodSetConfig {
    fn default() -> Self {
        Self {
            decades: 2.0,
            min_d_over_h: 4.0,
            bins: 120,
            // Right-angle corners fit near C1 = 1/sin(π/4); cusps go far higher.
            max_c1: 2.5,
            max_violation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootReport {
    pub theta: f64,
    pub root: Point,
    /// Base point of the fit: midpoint of the root and `r e^{iθ}`.
    pub x0: Point,
    pub fit: QhbcFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodSetReport {
    pub r: f64,
    pub eps: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub roots: [RootReport; 2],
    pub is_good: bool,
}

impl GoodSetReport {
    pub const CSV_HEADER: &'static str =
        "K_id,r,eps,theta1,theta2,C1_root1,C2_root1,C1_root2,C2_root2,is_good";

    pub fn csv_row(&self, k_id: &str) -> String {
        format!(
            "{k_id},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.r,
            self.eps,
            self.theta1,
            self.theta2,
            self.roots[0].fit.c1,
            self.roots[0].fit.c2,
            self.roots[1].fit.c1,
            self.roots[1].fit.c2,
            self.is_good
        )
    }
}

fn root_report(
    dom: &Domain,
    r: f64,
    eps: f64,
    theta: f64,
    cfg: &GoodSetConfig,
) -> Result<RootReport, QhError> {
    let y = circle_point(r, theta);
    let root = dom
        .nearest_obstacle_point(&y)
        .filter(|q| dist(q, &y) <= r * eps * (1.0 + 1e-9))
        .ok_or(QhError::RootNotFound(theta))?;
    let x0 = Point::new(vec![0.5 * (root[0] + y[0]), 0.5 * (root[1] + y[1])])
        .map_err(|_| QhError::RootNotFound(theta))?;
    let root = Point::new(root).map_err(|_| QhError::RootNotFound(theta))?;
    let region = BallRegion {
        center: root.clone(),
        radius: r * eps,
        obstacles: dom.obstacles(),
    };
    let d0 = region.boundary_distance(&x0);
    if d0 <= 0.0 {
        return Err(QhError::OutsideRegion(x0));
    }
    // A quarter-decade margin so the sampled span reaches the requested one.
    let d_min = d0 * 10f64.powf(-(cfg.decades + 0.25));
    let h = d_min / cfg.min_d_over_h;
    let g = QhGraph::new(&region, h)?;
    let field = g.field(&x0)?;
    let samples = envelope_samples(&field, d0, d_min, cfg.bins);
    let fit = fit_qhbc(d0, &samples)?;
    Ok(RootReport {
        theta,
        root,
        x0,
        fit,
    })
}

/// Checks the `(r, ε)`-good property of the obstacle set of `dom`: finds the
/// hitting angles, picks each root as the point of `K` nearest to
/// `r e^{iθ_i}`, and fits the boundary condition on the component of
/// `B(x_i, rε) − K` containing the midpoint of the root and `r e^{iθ_i}`.
pub fn good_set_check(
    dom: &Domain,
    r: f64,
    eps: f64,
    cfg: &GoodSetConfig,
) -> Result<GoodSetReport, QhError> {
    if dom.dim() != 2 {
        return Err(QhError::UnsupportedDimension(dom.dim()));
    }
    if !(r > 0.0 && r < 1.0 && eps > 0.0 && eps < 1.0) {
        return Err(QhError::BadRadius { r, eps });
    }
    let (theta1, theta2) =
        hitting_angles(dom.obstacles(), r, eps).ok_or(QhError::NoHittingAngles)?;
    let a = root_report(dom, r, eps, theta1, cfg)?;
    let b = root_report(dom, r, eps, theta2, cfg)?;
    let ok = |f: &QhbcFit| {
        f.c1.is_finite()
            && f.c2.is_finite()
            && f.c1 <= cfg.max_c1
            && f.max_violation <= cfg.max_violation
    };
    let is_good = ok(&a.fit) && ok(&b.fit);
    Ok(GoodSetReport {
        r,
        eps,
        theta1,
        theta2,
        roots: [a, b],
        is_good,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{LN_2, PI};

    fn disc() -> Domain {
        Domain::unit_ball(2).unwrap()
    }

    fn slit_domain() -> Domain {
        Domain::new(
            2,
            vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn offsets_are_coprime_and_symmetric() {
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 {
                a.abs()
            } else {
                gcd(b, a % b)
            }
        }
        for &(a, b) in &OFFSETS {
            assert_eq!(gcd(a, b), 1);
            assert!(OFFSETS.contains(&(-a, -b)));
        }
    }

    #[test]
    fn zero_distance_to_self() {
        let x = Point::from([0.2, 0.1]);
        assert_eq!(qh_distance(&disc(), &x, &x, 0.01).unwrap().value, 0.0);
    }

    #[test]
    fn ball_radial_distance() {
        // k(0, (0.5, 0)) = ∫₀^{1/2} dt / (1 − t) = log 2 in the unit disc.
        let v = qh_distance(&disc(), &Point::origin(2), &Point::from([0.5, 0.0]), 1.0 / 256.0)
            .unwrap();
        assert!((v.value - LN_2).abs() < 0.02 * LN_2, "{v:?}");
    }

    #[test]
    fn oblique_direction_is_accurate() {
        // Off-lattice direction: k(0, x) = log(1 / (1 − |x|)).
        let x = Point::from([0.37, 0.21]);
        let exact = -(1.0 - x.norm()).ln();
        let v = qh_distance(&disc(), &Point::origin(2), &x, 1.0 / 200.0).unwrap();
        assert!((v.value - exact).abs() < 0.01 * exact, "{} vs {exact}", v.value);
    }

    #[test]
    fn slit_blocks_straight_path() {
        let dom = slit_domain();
        let a = Point::from([-0.5, 0.1]);
        let b = Point::from([-0.5, -0.1]);
        let g = QhGraph::new(&dom, 1.0 / 128.0).unwrap();
        // Going around the slit tip costs far more than the straight segment.
        assert!(g.distance(&a, &b).unwrap() > 4.0);
    }

    #[test]
    fn symmetric_exactly() {
        let dom = slit_domain();
        let g = QhGraph::new(&dom, 1.0 / 64.0).unwrap();
        let a = Point::from([0.3, 0.4]);
        let b = Point::from([-0.6, -0.2]);
        assert_eq!(g.distance(&a, &b).unwrap(), g.distance(&b, &a).unwrap());
    }

    #[test]
    fn outside_point_rejected() {
        let dom = slit_domain();
        assert!(matches!(
            qh_distance(&dom, &Point::from([-0.5, 0.0]), &Point::origin(2), 0.05),
            Err(QhError::OutsideRegion(_))
        ));
        let d3 = Domain::unit_ball(3).unwrap();
        assert!(matches!(
            QhGraph::new(&d3, 0.1),
            Err(QhError::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn ball_qhbc_constants() {
        let dom = disc();
        let g = QhGraph::new(&dom, 1.0 / 512.0).unwrap();
        let f = g.field(&Point::origin(2)).unwrap();
        let samples = envelope_samples(&f, 1.0, 0.008, 120);
        let fit = fit_qhbc(1.0, &samples).unwrap();
        assert!((fit.c1 - 1.0).abs() < 0.05 && fit.c2 <= 0.1, "{fit:?}");
    }

    #[test]
    fn fit_edge_cases() {
        let one = fit_qhbc(1.0, &[(0.5, 0.7)]).unwrap();
        assert_eq!((one.c1, one.c2), (0.0, 0.7));
        assert!(matches!(
            fit_qhbc(1.0, &[(0.5, 0.7), (0.1, 2.0)]),
            Err(QhError::InsufficientSamples(2))
        ));
        let narrow: Vec<(f64, f64)> = (0..150).map(|i| (0.5 + i as f64 * 1e-3, 1.0)).collect();
        assert!(matches!(
            fit_qhbc(1.0, &narrow),
            Err(QhError::InsufficientRange { .. })
        ));
        let line: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let d = 10f64.powf(-3.0 * i as f64 / 199.0);
                (d, 2.0 * (1.0 / d).ln() + 0.5)
            })
            .collect();
        let f = fit_qhbc(1.0, &line).unwrap();
        assert!((f.c1 - 2.0).abs() < 1e-9 && (f.c2 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ss_integral_on_disc() {
        let dom = disc();
        let s = ss_sweep(&dom, &Point::origin(2), &[0.0, 0.5, 2.0], 1.0 / 256.0).unwrap();
        assert!((s[0].value - PI).abs() < 0.01 * PI);
        let target = 8.0 * PI / 3.0;
        assert!((s[1].value - target).abs() < 0.03 * target, "{:?}", s[1]);
        assert!(!s[1].diverges);
        assert!(s[2].diverges, "{:?}", s[2]);
        assert!(s[0].value < s[1].value && s[1].value < s[2].value);
        assert_eq!(largest_stable_tau(&s), Some(0.5));
    }

    #[test]
    fn slit_hitting_angles() {
        let k = [ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)];
        let (t1, t2) = hitting_angles(&k, 0.5, 0.1).unwrap();
        let expect = PI - 0.1f64.asin();
        assert!((t1 - expect).abs() < 1e-6 && (t2 + expect).abs() < 1e-6);
        for t in [t1, t2] {
            let d = obstacle_distance(&k, &circle_point(0.5, t));
            assert!((d - 0.05).abs() < 1e-5);
        }
        let far = [ObstacleShape::ball([-0.05, 0.0], 0.01)];
        assert!(hitting_angles(&far, 0.5, 0.1).is_none());
    }

    #[test]
    fn thick_slit_is_good() {
        let dom = Domain::new(
            2,
            vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.02)],
            1.0,
        )
        .unwrap();
        let cfg = GoodSetConfig {
            decades: 2.0,
            min_d_over_h: 2.0,
            ..GoodSetConfig::default()
        };
        let rep = good_set_check(&dom, 0.5, 0.1, &cfg).unwrap();
        assert!(rep.is_good, "{rep:?}");
        assert!(rep.roots[0].root[1] > 0.0 && rep.roots[1].root[1] < 0.0);
        assert!(rep.roots[0].fit.c1 < 2.0);
    }

    #[test]
    fn tangent_disc_cusp_is_flagged() {
        // Two discs touching above the slit leave a cusp of Ω next to the root.
        let (c, rad) = (-0.4975, 0.02);
        let dom = Domain::new(
            2,
            vec![
                ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0),
                ObstacleShape::ball([c - rad, rad], rad),
                ObstacleShape::ball([c + rad, rad], rad),
            ],
            1.0,
        )
        .unwrap();
        let cfg = GoodSetConfig {
            min_d_over_h: 2.0,
            ..GoodSetConfig::default()
        };
        let rep = good_set_check(&dom, 0.5, 0.1, &cfg).unwrap();
        assert!(!rep.is_good);
        assert!(rep.roots[0].fit.c1 > cfg.max_c1, "{:?}", rep.roots[0].fit);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn triangle_and_log_lower_bound(
            a in (-0.6f64..0.6, -0.6f64..0.6),
            b in (-0.6f64..0.6, -0.6f64..0.6),
            c in (-0.6f64..0.6, -0.6f64..0.6),
        ) {
            let dom = disc();
            let g = QhGraph::new(&dom, 1.0 / 64.0).unwrap();
            let (a, b, c) = (Point::from([a.0, a.1]), Point::from([b.0, b.1]), Point::from([c.0, c.1]));
            let ab = g.distance(&a, &b).unwrap();
            let bc = g.distance(&b, &c).unwrap();
            let ac = g.distance(&a, &c).unwrap();
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-12) + 1e-12);
            let lb = (dom.boundary_distance(&a) / dom.boundary_distance(&b)).ln().abs();
            prop_assert!(ab >= lb * 0.98);
        }

        #[test]
        fn ss_monotone_in_tau(t1 in 0.0f64..0.9, t2 in 0.0f64..0.9) {
            let dom = disc();
            let g = QhGraph::new(&dom, 1.0 / 32.0).unwrap();
            let f = g.field(&Point::from([0.1, 0.0])).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(f.exp_sum(lo) <= f.exp_sum(hi));
        }
    }
}
