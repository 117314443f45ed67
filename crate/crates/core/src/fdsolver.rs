//! Finite-difference Dirichlet solver on node-centred grids in two and three
//! dimensions.
//!
//! Nodes within `h/2` of `K` are frozen at the obstacle data, so obstacles are
//! dilated by at most half a cell and a thin curve can never be crossed by a
//! stencil edge. The outer sphere is resolved with Shortley–Weller arms, so
//! the sphere itself carries no staircase error. Sweeps are red-black SOR.

use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{norm, Domain, GeometryError, Point};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const COARSEST_CELLS: usize = 64;
/// Grid size cap in three dimensions.
pub const MAX_CELLS_3D: usize = 128;
pub const MAX_CELLS_2D: usize = 8192;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdError {
    #[error("finite differences support d = 2 or 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("{cells} cells per axis outside the supported range [4, {max}]")]
    BadResolution { cells: usize, max: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("query point {0} lies in an obstacle cell")]
    QueryInObstacle(Point),
    #[error("query point {0} is within two cells of an obstacle cell")]
    QueryTooClose(Point),
    #[error("query point {0} has no complete interpolation stencil inside the domain")]
    QueryOutsideGrid(Point),
    #[error("SOR stalled at update size {residual:e} after {sweeps} sweeps (tolerance {tol:e})")]
    NotConverged {
        tol: f64,
        residual: f64,
        sweeps: usize,
    },
    #[error("{0} interior nodes are not connected to any boundary data")]
    Disconnected(usize),
    #[error("dump failed: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Interior node with the plain averaging stencil.
const REGULAR: u8 = 0;
/// Interior node with at least one arm cut by the outer sphere.
const IRREGULAR: u8 = 1;
/// Node frozen at obstacle data.
const OBSTACLE: u8 = 2;
/// Node frozen at boundary data of a non-obstacle edge (e.g. a box wall).
const EDGE: u8 = 3;
/// Node outside the domain, never read by a stencil.
const OUTSIDE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// A point of the outer sphere or a box wall.
    Outer,
    /// A node frozen to the obstacle data.
    Obstacle,
}

#[derive(Debug, Clone)]
struct Arm {
    /// Neighbour node index, or `None` when the arm ends on the sphere.
    node: Option<usize>,
    weight: f64,
    /// Sphere point at the end of a cut arm.
    point: Vec<f64>,
}

#[derive(Debug, Clone)]
struct IrregularNode {
    index: usize,
    color: usize,
    diag: f64,
    arms: Vec<Arm>,
}

/// Node classification of a box `[lower, lower + cells·h]^d`.
#[derive(Debug, Clone)]
pub struct RasterDomain {
    dim: usize,
    cells: usize,
    h: f64,
    lower: f64,
    kind: Vec<u8>,
    /// Sorted by node index.
    irregular: Vec<IrregularNode>,
    /// `irregular[slab_ptr[z]..slab_ptr[z + 1]]` lie in slab `z` (last
    /// coordinate index `z`).
    slab_ptr: Vec<usize>,
    strides: Vec<usize>,
}

impl RasterDomain {
    /// Rasterises `dom` on `cells` cells across `[-R, R]^d`.
    pub fn from_domain(dom: &Domain, cells: usize) -> Result<Self, FdError> {
        let dim = dom.dim();
        check_resolution(dim, cells)?;
        let r = dom.outer_radius();
        let h = 2.0 * r / cells as f64;
        let mut rd = Self::blank(dim, cells, h, -r);
        let mut p = vec![0.0; dim];
        for i in 0..rd.kind.len() {
            rd.coords_into(i, &mut p);
            let rad = norm(&p);
            rd.kind[i] = if dom.obstacle_distance(&p) <= 0.5 * h {
                OBSTACLE
            } else if rad >= r * (1.0 - 1e-12) {
                if rad <= r * (1.0 + 1e-12) {
                    EDGE
                } else {
                    OUTSIDE
                }
            } else {
                REGULAR
            };
        }
        // Cut arms crossing the sphere.
        for i in 0..rd.kind.len() {
            if rd.kind[i] != REGULAR {
                continue;
            }
            rd.coords_into(i, &mut p);
            if rd.neighbours(i).iter().all(|&(_, _, j)| rd.kind[j] != OUTSIDE) {
                continue;
            }
            let mut arms = Vec::with_capacity(2 * dim);
            let mut diag = 0.0;
            for a in 0..dim {
                let rest = norm(&p).powi(2) - p[a] * p[a];
                let mut theta = [1.0f64; 2];
                let mut ends = [None, None];
                for (s, sign) in [-1.0f64, 1.0].into_iter().enumerate() {
                    let j = if sign < 0.0 {
                        i - rd.strides[a]
                    } else {
                        i + rd.strides[a]
                    };
                    if rd.kind[j] == OUTSIDE {
                        let t = (r * r - rest).max(0.0).sqrt() - sign * p[a];
                        theta[s] = (t / h).clamp(1e-6, 1.0);
                        let mut q = p.clone();
                        q[a] += sign * theta[s] * h;
                        let qn = norm(&q);
                        q.iter_mut().for_each(|c| *c *= r / qn);
                        ends[s] = Some(q);
                    }
                }
                let sum = theta[0] + theta[1];
                diag += 1.0 / (theta[0] * theta[1]);
                for (s, sign) in [-1.0f64, 1.0].into_iter().enumerate() {
                    let weight = 1.0 / (theta[s] * sum);
                    let arm = match ends[s].take() {
                        Some(point) => Arm {
                            node: None,
                            weight,
                            point,
                        },
                        None => Arm {
                            node: Some(if sign < 0.0 {
                                i - rd.strides[a]
                            } else {
                                i + rd.strides[a]
                            }),
                            weight,
                            point: Vec::new(),
                        },
                    };
                    arms.push(arm);
                }
            }
            rd.kind[i] = IRREGULAR;
            let color = rd.color(i);
            rd.irregular.push(IrregularNode {
                index: i,
                color,
                diag,
                arms,
            });
        }
        let slab = rd.strides[dim - 1];
        let mut ptr = vec![0usize; cells + 2];
        for node in &rd.irregular {
            ptr[node.index / slab + 1] += 1;
        }
        for z in 0..=cells {
            ptr[z + 1] += ptr[z];
        }
        rd.slab_ptr = ptr;
        Ok(rd)
    }

    /// The square (or cube) `[0, 1]^d` with every wall node frozen.
    pub fn unit_box(dim: usize, cells: usize) -> Result<Self, FdError> {
        check_resolution(dim, cells)?;
        let mut rd = Self::blank(dim, cells, 1.0 / cells as f64, 0.0);
        for i in 0..rd.kind.len() {
            let on_wall = rd
                .multi_index(i)
                .iter()
                .any(|&k| k == 0 || k == cells);
            rd.kind[i] = if on_wall { EDGE } else { REGULAR };
        }
        Ok(rd)
    }

    fn blank(dim: usize, cells: usize, h: f64, lower: f64) -> Self {
        let n = cells + 1;
        let strides: Vec<usize> = (0..dim).map(|a| n.pow(a as u32)).collect();
        Self {
            dim,
            cells,
            h,
            lower,
            kind: vec![OUTSIDE; n.pow(dim as u32)],
            irregular: Vec::new(),
            slab_ptr: vec![0; cells + 2],
            strides,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn bounding_box(&self) -> (f64, f64) {
        (self.lower, self.lower + self.cells as f64 * self.h)
    }

    fn multi_index(&self, i: usize) -> Vec<usize> {
        let n = self.cells + 1;
        (0..self.dim).map(|a| (i / self.strides[a]) % n).collect()
    }

    fn coords_into(&self, i: usize, out: &mut [f64]) {
        let n = self.cells + 1;
        for a in 0..self.dim {
            out[a] = self.lower + ((i / self.strides[a]) % n) as f64 * self.h;
        }
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        self.coords_into(i, &mut p);
        p
    }

    fn color(&self, i: usize) -> usize {
        self.multi_index(i).iter().sum::<usize>() % 2
    }

    /// `(axis, sign, index)` of every in-grid neighbour.
    fn neighbours(&self, i: usize) -> Vec<(usize, i8, usize)> {
        let idx = self.multi_index(i);
        let mut out = Vec::with_capacity(2 * self.dim);
        for a in 0..self.dim {
            if idx[a] > 0 {
                out.push((a, -1, i - self.strides[a]));
            }
            if idx[a] < self.cells {
                out.push((a, 1, i + self.strides[a]));
            }
        }
        out
    }

    pub fn is_obstacle_node(&self, i: usize) -> bool {
        self.kind[i] == OBSTACLE
    }

    pub fn is_interior_node(&self, i: usize) -> bool {
        self.kind[i] <= IRREGULAR
    }

    pub fn obstacle_node_count(&self) -> usize {
        self.kind.iter().filter(|&&k| k == OBSTACLE).count()
    }

    /// Interior nodes from which no stencil path reaches boundary data.
    fn unanchored_count(&self) -> usize {
        let mut seen = vec![false; self.kind.len()];
        let mut stack: Vec<usize> = Vec::new();
        for i in 0..self.kind.len() {
            if self.kind[i] == IRREGULAR
                || (self.kind[i] == REGULAR
                    && self
                        .neighbours(i)
                        .iter()
                        .any(|&(_, _, j)| matches!(self.kind[j], OBSTACLE | EDGE)))
            {
                seen[i] = true;
                stack.push(i);
            }
        }
        while let Some(i) = stack.pop() {
            for (_, _, j) in self.neighbours(i) {
                if !seen[j] && self.is_interior_node(j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..self.kind.len())
            .filter(|&i| self.is_interior_node(i) && !seen[i])
            .count()
    }

    /// Lower-corner multi-index and fractional offsets of the cell holding `p`.
    fn locate(&self, p: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        let mut base = Vec::with_capacity(self.dim);
        let mut frac = Vec::with_capacity(self.dim);
        for &c in p {
            let s = (c - self.lower) / self.h;
            if !(s >= 0.0 && s <= self.cells as f64) {
                return None;
            }
            let k = (s.floor() as usize).min(self.cells - 1);
            base.push(k);
            frac.push(s - k as f64);
        }
        Some((base, frac))
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    /// Checks that `p` can be interpolated: every stencil corner carries a
    /// value and no obstacle node lies within two cells.
    pub fn check_query(&self, p: &Point) -> Result<(), FdError> {
        let (base, _) = self
            .locate(p)
            .ok_or_else(|| FdError::QueryOutsideGrid(p.clone()))?;
        let mut corners_ok = true;
        let mut near = false;
        let mut in_obstacle = false;
        let lo: Vec<i64> = base.iter().map(|&k| k as i64 - 2).collect();
        let span = 6i64;
        let total = span.pow(self.dim as u32);
        for t in 0..total {
            let mut idx = Vec::with_capacity(self.dim);
            let mut corner = true;
            let mut rem = t;
            for a in 0..self.dim {
                let off = rem % span;
                rem /= span;
                corner &= off == 2 || off == 3;
                idx.push(lo[a] + off);
            }
            if idx.iter().any(|&k| k < 0 || k > self.cells as i64) {
                if corner {
                    corners_ok = false;
                }
                continue;
            }
            let idx: Vec<usize> = idx.into_iter().map(|k| k as usize).collect();
            let kind = self.kind[self.flat(&idx)];
            if kind == OBSTACLE {
                near = true;
                if corner {
                    in_obstacle = true;
                }
            }
            if corner && kind == OUTSIDE {
                corners_ok = false;
            }
        }
        if in_obstacle {
            return Err(FdError::QueryInObstacle(p.clone()));
        }
        if near {
            return Err(FdError::QueryTooClose(p.clone()));
        }
        if !corners_ok {
            return Err(FdError::QueryOutsideGrid(p.clone()));
        }
        Ok(())
    }

    /// Multilinear interpolation of node values at `p`, without checks.
    fn interpolate_unchecked(&self, values: &[f64], p: &[f64]) -> Option<f64> {
        let (base, frac) = self.locate(p)?;
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..self.dim {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * values[self.flat(&idx)];
            }
        }
        Some(acc)
    }

    pub fn interpolate(&self, values: &[f64], p: &Point) -> Result<f64, FdError> {
        self.check_query(p)?;
        self.interpolate_unchecked(values, p)
            .ok_or_else(|| FdError::QueryOutsideGrid(p.clone()))
    }

    /// Optimal SOR factor for the model problem on this grid.
    pub fn sor_omega(&self) -> f64 {
        2.0 / (1.0 + (PI / self.cells as f64).sin())
    }
}

fn check_resolution(dim: usize, cells: usize) -> Result<(), FdError> {
    let max = match dim {
        2 => MAX_CELLS_2D,
        3 => MAX_CELLS_3D,
        _ => return Err(FdError::UnsupportedDimension(dim)),
    };
    if !(4..=max).contains(&cells) {
        return Err(FdError::BadResolution { cells, max });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub values: Vec<f64>,
    pub sweeps: usize,
    /// Largest update size of the final sweep.
    pub residual: f64,
}

/// SOR solve of the discrete Laplace equation with boundary data `data`.
/// `init`, when given, is used as the starting iterate for interior nodes.
pub fn solve_dirichlet<F>(
    rd: &RasterDomain,
    data: F,
    tol: f64,
    max_sweeps: usize,
    init: Option<&[f64]>,
) -> Result<GridSolution, FdError>
where
    F: Fn(&[f64], BoundaryKind) -> f64,
{
    let init: Option<Vec<[f64; 1]>> = init.map(|v| v.iter().map(|&x| [x]).collect());
    let (values, sweeps, residual) = solve_fields::<1>(rd, [&data], tol, max_sweeps, init.as_deref())?;
    Ok(GridSolution {
        values: values.into_iter().map(|[x]| x).collect(),
        sweeps,
        residual,
    })
}

type Data<'a> = &'a dyn Fn(&[f64], BoundaryKind) -> f64;

/// Solves `NF` problems sharing one grid in a single interleaved sweep.
fn solve_fields<const NF: usize>(
    rd: &RasterDomain,
    data: [Data<'_>; NF],
    tol: f64,
    max_sweeps: usize,
    init: Option<&[[f64; NF]]>,
) -> Result<(Vec<[f64; NF]>, usize, f64), FdError> {
    if !(tol > 0.0) {
        return Err(FdError::BadTolerance(tol));
    }
    let unanchored = rd.unanchored_count();
    if unanchored > 0 {
        return Err(FdError::Disconnected(unanchored));
    }
    let mut u = vec![[0.0; NF]; rd.len()];
    let mut p = vec![0.0; rd.dim];
    let mut lo = [f64::INFINITY; NF];
    let mut hi = [f64::NEG_INFINITY; NF];
    let radius = rd.bounding_box().1;
    for i in 0..rd.len() {
        rd.coords_into(i, &mut p);
        let kind = rd.kind[i];
        if kind == OUTSIDE {
            let s = radius / norm(&p);
            p.iter_mut().for_each(|c| *c *= s);
        }
        for f in 0..NF {
            u[i][f] = match kind {
                OBSTACLE => data[f](&p, BoundaryKind::Obstacle),
                EDGE | OUTSIDE => data[f](&p, BoundaryKind::Outer),
                _ => init.map_or(0.0, |v| v[i][f]),
            };
            if matches!(kind, OBSTACLE | EDGE) {
                lo[f] = lo[f].min(u[i][f]);
                hi[f] = hi[f].max(u[i][f]);
            }
        }
    }
    // Boundary contributions of cut arms.
    let mut rhs: Vec<[f64; NF]> = Vec::with_capacity(rd.irregular.len());
    for node in &rd.irregular {
        let mut b = [0.0; NF];
        for a in node.arms.iter().filter(|a| a.node.is_none()) {
            for f in 0..NF {
                let v = data[f](&a.point, BoundaryKind::Outer);
                lo[f] = lo[f].min(v);
                hi[f] = hi[f].max(v);
                b[f] += a.weight * v;
            }
        }
        rhs.push(b);
    }
    if init.is_none() {
        for f in 0..NF {
            let mid = if lo[f].is_finite() { 0.5 * (lo[f] + hi[f]) } else { 0.0 };
            for i in 0..rd.len() {
                if rd.is_interior_node(i) {
                    u[i][f] = mid;
                }
            }
        }
    }
    let omega = rd.sor_omega();
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < max_sweeps {
        let k = PIPELINE_DEPTH.min(max_sweeps - sweeps);
        let worst = pipelined_sweeps(rd, &mut u, &rhs, omega, k);
        sweeps += k;
        residual = worst;
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok((u, sweeps, residual));
        }
    }
    Err(FdError::NotConverged {
        tol,
        residual,
        sweeps,
    })
}

/// Red-black sweeps fused per pass over memory.
const PIPELINE_DEPTH: usize = 8;

/// Runs `k` red-black sweeps as a wavefront over slabs: at step `t`, stage
/// `s` updates slab `t − s` with colour `s mod 2` of sweep `s / 2`. Every
/// stage only reads slabs its predecessor has finished, so the result equals
/// `k` ordinary sweeps while the active slabs stay in cache. Returns the
/// largest update of the last sweep.
fn pipelined_sweeps<const NF: usize>(
    rd: &RasterDomain,
    u: &mut [[f64; NF]],
    rhs: &[[f64; NF]],
    omega: f64,
    k: usize,
) -> f64 {
    let n = rd.cells + 1;
    let stages = 2 * k;
    let mut worst: f64 = 0.0;
    for t in 1..n - 1 + stages - 1 {
        for s in 0..stages {
            let Some(z) = t.checked_sub(s) else { break };
            if z == 0 || z >= n - 1 {
                continue;
            }
            if s + 2 >= stages {
                worst = worst.max(update_slab::<NF, true>(rd, u, rhs, z, s % 2, omega));
            } else {
                update_slab::<NF, false>(rd, u, rhs, z, s % 2, omega);
            }
        }
    }
    worst
}

/// One colour of an interior row of a planar grid; `base` is the index of
/// the row's first node.
#[inline]
fn row_2d<const NF: usize, const TRACK: bool>(
    kind: &[u8],
    u: &mut [[f64; NF]],
    base: usize,
    start: usize,
    omega: f64,
    worst: &mut [f64; NF],
) {
    let n = kind.len();
    let (above, rest) = u.split_at_mut(base);
    let (cur, below) = rest.split_at_mut(n);
    let up = &above[base - n..];
    let dn = &below[..n];
    let mut i = start;
    while i < n - 1 {
        if kind[i] == REGULAR {
            let (l, r, a, b) = (cur[i - 1], cur[i + 1], up[i], dn[i]);
            let c = &mut cur[i];
            for f in 0..NF {
                let defect = 0.25 * (l[f] + r[f] + a[f] + b[f]) - c[f];
                if TRACK {
                    worst[f] = worst[f].max(defect.abs());
                }
                c[f] += omega * defect;
            }
        }
        i += 2;
    }
}

fn update_slab<const NF: usize, const TRACK: bool>(
    rd: &RasterDomain,
    u: &mut [[f64; NF]],
    rhs: &[[f64; NF]],
    z: usize,
    color: usize,
    omega: f64,
) -> f64 {
    let n = rd.cells + 1;
    let mut worst = [0.0f64; NF];
    let mut row = |u: &mut [[f64; NF]], base: usize, start: usize, far: usize| {
        let kind = &rd.kind[base..base + n];
        for i in (start..n - 1).step_by(2) {
            if kind[i] != REGULAR {
                continue;
            }
            let k = base + i;
            let mut sum = [0.0; NF];
            for f in 0..NF {
                sum[f] = u[k - 1][f]
                    + u[k + 1][f]
                    + u[k - n][f]
                    + u[k + n][f]
                    + u[k - far][f]
                    + u[k + far][f];
            }
            let scale = 1.0 / 6.0;
            for f in 0..NF {
                let defect = scale * sum[f] - u[k][f];
                if TRACK {
                    worst[f] = worst[f].max(defect.abs());
                }
                u[k][f] += omega * defect;
            }
        }
    };
    if rd.dim == 2 {
        let base = z * n;
        row_2d::<NF, TRACK>(
            &rd.kind[base..base + n],
            u,
            base,
            1 + (z + color + 1) % 2,
            omega,
            &mut worst,
        );
    } else {
        let nn = n * n;
        for y in 1..n - 1 {
            row(u, z * nn + y * n, 1 + (y + z + color + 1) % 2, nn);
        }
    }
    let mut worst = worst.into_iter().fold(0.0, f64::max);
    for idx in rd.slab_ptr[z]..rd.slab_ptr[z + 1] {
        let node = &rd.irregular[idx];
        if node.color != color {
            continue;
        }
        let mut acc = rhs[idx];
        for a in &node.arms {
            if let Some(j) = a.node {
                for f in 0..NF {
                    acc[f] += a.weight * u[j][f];
                }
            }
        }
        for f in 0..NF {
            let defect = acc[f] / node.diag - u[node.index][f];
            worst = worst.max(defect.abs());
            u[node.index][f] += omega * defect;
        }
    }
    worst
}

/// Boundary data selections for harmonic measure computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// The whole outer sphere.
    Sphere,
    /// The cap `W_β ∩ ∂B` about coordinate axis `axis`.
    Cone { half_angle: f64, axis: usize },
    /// Planar arc of the outer circle between polar angles `from < to`
    /// (radians, any branch).
    Arc { from: f64, to: f64 },
    /// `∂B ∩ {x_axis > 0}`.
    HalfSpace { axis: usize },
    /// The obstacle set `K`.
    Obstacles,
}

impl Target {
    pub fn value(&self, p: &[f64], kind: BoundaryKind) -> f64 {
        let on = match (self, kind) {
            (Target::Obstacles, k) => k == BoundaryKind::Obstacle,
            (_, BoundaryKind::Obstacle) => false,
            (Target::Sphere, _) => true,
            (Target::Cone { half_angle, axis }, _) => {
                crate::geometry::ConeSpec::with_axis(*half_angle, *axis)
                    .map(|c| c.contains(p))
                    .unwrap_or(false)
            }
            (Target::Arc { from, to }, _) => {
                let t = p[1].atan2(p[0]);
                let shifted = (t - from).rem_euclid(2.0 * PI);
                shifted <= to - from
            }
            (Target::HalfSpace { axis }, _) => p[*axis] > 0.0,
        };
        if on {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Cells across the diameter on the finest level.
    pub cells: usize,
    pub coarsest: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl FdConfig {
    pub fn new(cells: usize) -> Self {
        Self {
            cells,
            coarsest: COARSEST_CELLS,
            tol: DEFAULT_TOL,
            max_sweeps: 200_000,
        }
    }

    /// Cell counts from coarse to fine, halving down from `cells`.
    pub fn levels(&self) -> Vec<usize> {
        let mut out = vec![self.cells];
        let mut c = self.cells;
        while c % 2 == 0 && c / 2 >= self.coarsest.max(4) {
            c /= 2;
            out.push(c);
        }
        out.reverse();
        out
    }
}

/// Solutions on the finest grid and on the grid with twice the spacing.
#[derive(Debug, Clone)]
pub struct FdSolution {
    pub target: Target,
    pub fine_grid: Arc<RasterDomain>,
    pub fine: GridSolution,
    pub coarse_grid: Option<Arc<RasterDomain>>,
    pub coarse: Option<GridSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdValue {
    pub value: f64,
    pub coarse_value: f64,
    /// `|fine − coarse|`; for a first-order scheme this bounds the error of
    /// the fine value up to a constant near 1.
    pub error_estimate: f64,
    pub cells: usize,
}

impl FdSolution {
    pub fn value(&self, p: &Point) -> Result<f64, FdError> {
        self.fine_grid.interpolate(&self.fine.values, p)
    }

    pub fn evaluate(&self, p: &Point) -> Result<FdValue, FdError> {
        let value = self.value(p)?;
        let coarse_value = match (&self.coarse_grid, &self.coarse) {
            (Some(g), Some(s)) => g.interpolate(&s.values, p)?,
            _ => f64::NAN,
        };
        Ok(FdValue {
            value,
            coarse_value,
            error_estimate: (value - coarse_value).abs(),
            cells: self.fine_grid.cells(),
        })
    }

    /// Largest node value among interior nodes inside the open ball
    /// `B(center, radius)`, with the node attaining it.
    pub fn max_in_ball(&self, center: &[f64], radius: f64) -> Option<(f64, Vec<f64>)> {
        let g = &self.fine_grid;
        let mut best: Option<(f64, usize)> = None;
        let mut p = vec![0.0; g.dim];
        for i in 0..g.len() {
            if !g.is_interior_node(i) {
                continue;
            }
            g.coords_into(i, &mut p);
            if crate::geometry::dist(&p, center) < radius
                && best.is_none_or(|(v, _)| self.fine.values[i] > v)
            {
                best = Some((self.fine.values[i], i));
            }
        }
        best.map(|(v, i)| (v, g.node_coords(i)))
    }

    /// Writes `<stem>.bin` (little-endian f64 node values, first axis
    /// fastest) and `<stem>.txt` (dimensions, spacing, bounding box).
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<(), FdError> {
        let io = |e: std::io::Error| FdError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let g = &self.fine_grid;
        let mut bin = Vec::with_capacity(8 * g.len());
        for v in &self.fine.values {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(format!("{stem}.bin")), bin).map_err(io)?;
        let (lo, hi) = g.bounding_box();
        let mut f = fs::File::create(dir.join(format!("{stem}.txt"))).map_err(io)?;
        writeln!(f, "dim {}", g.dim).map_err(io)?;
        writeln!(f, "nodes_per_axis {}", g.cells + 1).map_err(io)?;
        writeln!(f, "h {:.17e}", g.h).map_err(io)?;
        writeln!(f, "bbox {lo:.17e} {hi:.17e}").map_err(io)?;
        writeln!(f, "dtype f64le").map_err(io)?;
        Ok(())
    }
}

/// Resamples a solution onto a finer grid (multilinear), as a warm start.
fn prolong<const NF: usize>(
    coarse: &RasterDomain,
    values: &[[f64; NF]],
    fine: &RasterDomain,
) -> Vec<[f64; NF]> {
    let mut p = vec![0.0; fine.dim];
    let mut field = vec![0.0; coarse.len()];
    let mut out = vec![[0.0; NF]; fine.len()];
    for f in 0..NF {
        field.iter_mut().zip(values).for_each(|(d, v)| *d = v[f]);
        for (i, o) in out.iter_mut().enumerate() {
            fine.coords_into(i, &mut p);
            o[f] = coarse.interpolate_unchecked(&field, &p).unwrap_or(0.0);
        }
    }
    out
}

fn split<const NF: usize>(values: &[[f64; NF]], sweeps: usize, residual: f64) -> [GridSolution; NF] {
    std::array::from_fn(|f| GridSolution {
        values: values.iter().map(|v| v[f]).collect(),
        sweeps,
        residual,
    })
}

type Level<const NF: usize> = (Arc<RasterDomain>, [GridSolution; NF]);

fn cascade<const NF: usize>(
    grids: &[Arc<RasterDomain>],
    targets: [&Target; NF],
    cfg: &FdConfig,
) -> Result<(Level<NF>, Option<Level<NF>>), FdError> {
    let closures: [Box<dyn Fn(&[f64], BoundaryKind) -> f64 + '_>; NF] =
        std::array::from_fn(|f| {
            let t = targets[f];
            Box::new(move |p: &[f64], k: BoundaryKind| t.value(p, k))
                as Box<dyn Fn(&[f64], BoundaryKind) -> f64>
        });
    let data: [Data<'_>; NF] = std::array::from_fn(|f| &*closures[f] as Data<'_>);
    let mut prev: Option<(Arc<RasterDomain>, Vec<[f64; NF]>, usize, f64)> = None;
    let mut coarse = None;
    for g in grids {
        let init = prev.as_ref().map(|(pg, pv, _, _)| prolong(pg, pv, g));
        let (values, sweeps, residual) =
            solve_fields::<NF>(g, data, cfg.tol, cfg.max_sweeps, init.as_deref())?;
        coarse = prev.take();
        prev = Some((g.clone(), values, sweeps, residual));
    }
    let (g, v, s, r) = prev.expect("at least one level");
    let fine = (g, split(&v, s, r));
    let coarse = coarse.map(|(g, v, s, r)| (g, split(&v, s, r)));
    Ok((fine, coarse))
}

/// Solves for every target on a cascade of grids, each level warm-started
/// from the previous one, and keeps the two finest levels. Targets are
/// solved two at a time in one interleaved sweep.
pub fn solve_targets(
    dom: &Domain,
    targets: &[Target],
    cfg: &FdConfig,
) -> Result<Vec<FdSolution>, FdError> {
    if dom.dim() == 2 || dom.dim() == 3 {
        check_resolution(dom.dim(), cfg.cells)?;
    } else {
        return Err(FdError::UnsupportedDimension(dom.dim()));
    }
    let grids = cfg
        .levels()
        .into_iter()
        .map(|c| RasterDomain::from_domain(dom, c).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(targets.len());
    let mut push = |fine: (Arc<RasterDomain>, Vec<GridSolution>),
                    coarse: Option<(Arc<RasterDomain>, Vec<GridSolution>)>,
                    ts: &[Target]| {
        let (cg, mut cs) = match coarse {
            Some((g, s)) => (Some(g), s.into_iter().map(Some).collect()),
            None => (None, vec![None; ts.len()]),
        };
        for ((t, s), c) in ts.iter().zip(fine.1).zip(cs.drain(..)) {
            out.push(FdSolution {
                target: t.clone(),
                fine_grid: fine.0.clone(),
                fine: s,
                coarse_grid: cg.clone(),
                coarse: c,
            });
        }
    };
    for pair in targets.chunks(2) {
        match pair {
            [a, b] => {
                let (f, c) = cascade::<2>(&grids, [a, b], cfg)?;
                push((f.0, f.1.to_vec()), c.map(|(g, s)| (g, s.to_vec())), pair);
            }
            [a] => {
                let (f, c) = cascade::<1>(&grids, [a], cfg)?;
                push((f.0, f.1.to_vec()), c.map(|(g, s)| (g, s.to_vec())), pair);
            }
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Harmonic measure of `target` seen from `p`, with a grid-halving error
/// estimate.
pub fn harmonic_measure_fd(
    dom: &Domain,
    target: &Target,
    p: &Point,
    cells: usize,
    tol: f64,
) -> Result<FdValue, FdError> {
    if p.dim() != dom.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: dom.dim(),
            got: p.dim(),
        }
        .into());
    }
    let cfg = FdConfig {
        tol,
        ..FdConfig::new(cells)
    };
    let sol = solve_targets(dom, std::slice::from_ref(target), &cfg)?;
    sol[0].evaluate(p)
}
