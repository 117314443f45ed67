//! Simple random walk on `Z²` killed on an obstacle `K` and stopped on leaving
//! `Q(0, N)`.
//!
//! For a start point `x` the walk runs until `τ+ = min{k ≥ 1 : S_k ∉ D}` with
//! `D = Q(0, N) − K`. The event `F` is "the walk leaves through `Q(0,N)^c`"
//! (rather than landing on `K`), and the target event additionally requires
//! the exit site to lie in `W = {|x2| ≤ x1}`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{RngStream, BATCH_SIZE};
use crate::stats::{binomial_sigma, wilson, Z95};

pub type Site = (i32, i32);

/// Largest supported `N`.
pub const MAX_N: u32 = 256;
pub const DEFAULT_OMEGA: f64 = 1.9;
pub const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("N = {0} outside the supported range [2, {MAX_N}]")]
    BadSize(u32),
    #[error("obstacle site {0:?} is not in the closed left half plane")]
    ObstacleNotLeft(Site),
    #[error("site {0:?} is outside Q(0, {1})")]
    OutsideBox(Site, u32),
    #[error("SOR did not reach residual {tol:e} in {iterations} sweeps (residual {residual:e})")]
    NotConverged {
        tol: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("start {0:?} must satisfy x1 >= 0 and lie in Q(0, N/16)")]
    BadSweepStart(Site),
    #[error("relaxation factor {0} outside (0, 2)")]
    BadOmega(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeNorm {
    #[default]
    Euclidean,
    Linf,
}

impl LatticeNorm {
    fn within(self, (x, y): Site, n: u32) -> bool {
        let n = n as i64;
        let (x, y) = (x as i64, y as i64);
        match self {
            LatticeNorm::Euclidean => x * x + y * y <= n * n,
            LatticeNorm::Linf => x.abs() <= n && y.abs() <= n,
        }
    }
}

/// `W = {(x1, x2) : |x2| ≤ x1}`.
pub fn in_w((x, y): Site) -> bool {
    y.abs() <= x
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProblem {
    n: u32,
    obstacle: BTreeSet<Site>,
    start: Site,
    norm: LatticeNorm,
}

impl LatticeProblem {
    pub fn new(
        n: u32,
        obstacle: impl IntoIterator<Item = Site>,
        start: Site,
        norm: LatticeNorm,
    ) -> Result<Self, LatticeError> {
        if !(2..=MAX_N).contains(&n) {
            return Err(LatticeError::BadSize(n));
        }
        let obstacle: BTreeSet<Site> = obstacle.into_iter().collect();
        for &s in &obstacle {
            if s.0 > 0 {
                return Err(LatticeError::ObstacleNotLeft(s));
            }
            if !norm.within(s, n) {
                return Err(LatticeError::OutsideBox(s, n));
            }
        }
        if !norm.within(start, n) {
            return Err(LatticeError::OutsideBox(start, n));
        }
        Ok(Self {
            n,
            obstacle,
            start,
            norm,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn obstacle(&self) -> &BTreeSet<Site> {
        &self.obstacle
    }

    pub fn start(&self) -> Site {
        self.start
    }

    pub fn norm(&self) -> LatticeNorm {
        self.norm
    }

    pub fn with_start(&self, start: Site) -> Result<Self, LatticeError> {
        Self::new(self.n, self.obstacle.iter().copied(), start, self.norm)
    }

    /// Mirror image across the `x1`-axis.
    pub fn reflected(&self) -> Self {
        Self {
            obstacle: self.obstacle.iter().map(|&(x, y)| (x, -y)).collect(),
            start: (self.start.0, -self.start.1),
            ..self.clone()
        }
    }
}

const INTERIOR: u8 = 0;
const OBSTACLE: u8 = 1;
const OUTSIDE: u8 = 2;

/// Site classification on the square `[-N-1, N+1]²`, which contains every
/// site reachable in one step from `Q(0, N)`.
struct Board {
    n: i32,
    side: usize,
    cell: Vec<u8>,
}

impl Board {
    fn new(prob: &LatticeProblem) -> Self {
        let n = prob.n as i32;
        let side = (2 * n + 3) as usize;
        let mut cell = vec![OUTSIDE; side * side];
        for y in -n..=n {
            for x in -n..=n {
                if prob.norm.within((x, y), prob.n) {
                    cell[Self::index_of(n, side, (x, y))] = INTERIOR;
                }
            }
        }
        for &s in &prob.obstacle {
            cell[Self::index_of(n, side, s)] = OBSTACLE;
        }
        Self { n, side, cell }
    }

    #[inline]
    fn index_of(n: i32, side: usize, (x, y): Site) -> usize {
        (y + n + 1) as usize * side + (x + n + 1) as usize
    }

    #[inline]
    fn index(&self, s: Site) -> usize {
        Self::index_of(self.n, self.side, s)
    }

    #[inline]
    fn site(&self, i: usize) -> Site {
        (
            (i % self.side) as i32 - self.n - 1,
            (i / self.side) as i32 - self.n - 1,
        )
    }
}

/// Exit probabilities for every site of `[-N-1, N+1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    n: u32,
    side: usize,
    /// `P^x(S_τ ∉ K, S_τ ∈ W)`; boundary data outside `D`.
    pub p_exit_w: Vec<f64>,
    /// `P^x(S_τ ∉ K)`; boundary data outside `D`.
    pub p_f: Vec<f64>,
    /// Largest mean-value defect over `D` for either field.
    pub residual: f64,
    pub iterations: usize,
    start: Site,
    start_values: (f64, f64),
}

impl ExactSolution {
    fn idx(&self, (x, y): Site) -> Option<usize> {
        let n = self.n as i32 + 1;
        if x.abs() > n || y.abs() > n {
            return None;
        }
        Some((y + n) as usize * self.side + (x + n) as usize)
    }

    /// Field values `(p_exit_W, p_F)` at a site, with `τ` counted from time 0.
    pub fn at(&self, s: Site) -> Option<(f64, f64)> {
        self.idx(s).map(|i| (self.p_exit_w[i], self.p_f[i]))
    }

    /// `(P(S_{τ+} ∈ W ∩ K^c), P(F))` from the problem's start site.
    pub fn start_values(&self) -> (f64, f64) {
        self.start_values
    }

    /// `P(S_{τ+} ∈ W | F)` from the problem's start site.
    pub fn conditional(&self) -> f64 {
        let (u, v) = self.start_values;
        if v > 0.0 {
            u / v
        } else {
            f64::NAN
        }
    }
}

pub fn exact_solve(prob: &LatticeProblem) -> Result<ExactSolution, LatticeError> {
    exact_solve_with(prob, DEFAULT_OMEGA, 1_000_000)
}

/// SOR solve of the four-neighbour mean-value equation for both fields.
pub fn exact_solve_with(
    prob: &LatticeProblem,
    omega: f64,
    max_sweeps: usize,
) -> Result<ExactSolution, LatticeError> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(LatticeError::BadOmega(omega));
    }
    let board = Board::new(prob);
    let side = board.side;
    let len = side * side;
    let mut u = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut interior = Vec::new();
    for i in 0..len {
        match board.cell[i] {
            OUTSIDE => {
                v[i] = 1.0;
                if in_w(board.site(i)) {
                    u[i] = 1.0;
                }
            }
            INTERIOR => interior.push(i),
            _ => {}
        }
    }
    let sweep = |f: &mut [f64], relax: f64| -> f64 {
        let mut worst: f64 = 0.0;
        for &i in &interior {
            let avg = 0.25 * (f[i - 1] + f[i + 1] + f[i - side] + f[i + side]);
            let defect = avg - f[i];
            worst = worst.max(defect.abs());
            f[i] += relax * defect;
        }
        worst
    };
    // The defect seen during a sweep overestimates the final residual, so
    // convergence is confirmed by a plain residual pass.
    let residual_of = |f: &[f64]| -> f64 {
        interior
            .iter()
            .map(|&i| (0.25 * (f[i - 1] + f[i + 1] + f[i - side] + f[i + side]) - f[i]).abs())
            .fold(0.0, f64::max)
    };
    let target = 0.1 * RESIDUAL_TOL;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_sweeps {
        let du = sweep(&mut u, omega);
        let dv = sweep(&mut v, omega);
        iterations += 1;
        if du.max(dv) < target {
            residual = residual_of(&u).max(residual_of(&v));
            if residual <= RESIDUAL_TOL {
                break;
            }
        }
    }
    if residual > RESIDUAL_TOL {
        return Err(LatticeError::NotConverged {
            tol: RESIDUAL_TOL,
            residual: residual_of(&u).max(residual_of(&v)),
            iterations,
        });
    }
    let first_step = |f: &[f64]| {
        let i = board.index(prob.start);
        0.25 * (f[i - 1] + f[i + 1] + f[i - side] + f[i + side])
    };
    let start_values = (first_step(&u), first_step(&v));
    Ok(ExactSolution {
        n: prob.n,
        side,
        p_exit_w: u,
        p_f: v,
        residual,
        iterations,
        start: prob.start,
        start_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassonEstimate {
    pub n_walks: u64,
    pub f_count: u64,
    pub w_count: u64,
    /// `None` when `F` never occurred in the sample.
    pub conditional: Option<f64>,
    pub sigma: f64,
    pub ci: (f64, f64),
}

/// Monte Carlo estimate of `P(S_{τ+} ∈ W | F)`; batch `b` uses stream `b` of
/// `seed`, so the result does not depend on the worker count.
pub fn masson_mc(prob: &LatticeProblem, n_walks: u64, seed: u64) -> MassonEstimate {
    let board = Board::new(prob);
    let side = board.side as isize;
    let offsets = [1isize, -1, side, -side];
    let start = board.index(prob.start) as isize;
    let batches = n_walks.div_ceil(BATCH_SIZE);
    let (f_count, w_count) = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(seed, b);
            let count = BATCH_SIZE.min(n_walks - b * BATCH_SIZE);
            let (mut f, mut w) = (0u64, 0u64);
            let (mut word, mut left) = (0u64, 0u32);
            for _ in 0..count {
                let mut pos = start;
                loop {
                    if left == 0 {
                        word = rng.bits();
                        left = 32;
                    }
                    pos += offsets[(word & 3) as usize];
                    word >>= 2;
                    left -= 1;
                    match board.cell[pos as usize] {
                        INTERIOR => continue,
                        OBSTACLE => break,
                        _ => {
                            f += 1;
                            if in_w(board.site(pos as usize)) {
                                w += 1;
                            }
                            break;
                        }
                    }
                }
            }
            (f, w)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let conditional = (f_count > 0).then(|| w_count as f64 / f_count as f64);
    MassonEstimate {
        n_walks,
        f_count,
        w_count,
        conditional,
        sigma: binomial_sigma(w_count, f_count),
        ci: wilson(w_count, f_count, Z95),
    }
}

/// Obstacle families, instantiated for a given `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KGenerator {
    /// `{(−j, 0) : 0 ≤ j ≤ round(fraction · N)}`.
    Slit { fraction: f64 },
    /// A slit of length `round(fraction · N)` with `teeth` vertical teeth of
    /// half-length `round(tooth_fraction · N)`, evenly spaced along it.
    Comb {
        fraction: f64,
        teeth: u32,
        tooth_fraction: f64,
    },
    /// Slit then an upward arm of length `round(arm_fraction · N)` at its far end.
    LShape { fraction: f64, arm_fraction: f64 },
    /// Nearest-neighbour path from the origin that only steps left, up or down
    /// and never revisits a site.
    RandomPath { fraction: f64, seed: u64 },
    /// Every site of `Q(0, N)` with `x1 ≤ 0`.
    LeftHalf,
    Explicit { sites: Vec<Site> },
}

impl KGenerator {
    pub fn generate(&self, n: u32, norm: LatticeNorm) -> Vec<Site> {
        let len = |f: f64| (f * n as f64).round().max(0.0) as i32;
        let mut out = Vec::new();
        match self {
            KGenerator::Slit { fraction } => out.extend((0..=len(*fraction)).map(|j| (-j, 0))),
            KGenerator::Comb {
                fraction,
                teeth,
                tooth_fraction,
            } => {
                let l = len(*fraction);
                out.extend((0..=l).map(|j| (-j, 0)));
                let t = len(*tooth_fraction);
                for k in 1..=*teeth as i32 {
                    let x = -(k * l) / (*teeth as i32);
                    for y in 1..=t {
                        out.push((x, y));
                        out.push((x, -y));
                    }
                }
            }
            KGenerator::LShape {
                fraction,
                arm_fraction,
            } => {
                let l = len(*fraction);
                out.extend((0..=l).map(|j| (-j, 0)));
                out.extend((1..=len(*arm_fraction)).map(|y| (-l, y)));
            }
            KGenerator::RandomPath { fraction, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut seen = BTreeSet::new();
                let mut cur = (0, 0);
                seen.insert(cur);
                out.push(cur);
                for _ in 0..len(*fraction) {
                    let moves: Vec<Site> = [(-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .map(|&(dx, dy)| (cur.0 + dx, cur.1 + dy))
                        .filter(|s| !seen.contains(s) && norm.within(*s, n))
                        .collect();
                    if moves.is_empty() {
                        break;
                    }
                    cur = moves[rng.random_range(0..moves.len())];
                    seen.insert(cur);
                    out.push(cur);
                }
            }
            KGenerator::LeftHalf => {
                let m = n as i32;
                for y in -m..=m {
                    for x in -m..=0 {
                        out.push((x, y));
                    }
                }
            }
            KGenerator::Explicit { sites } => out.extend(sites.iter().copied()),
        }
        out.retain(|&s| norm.within(s, n));
        out
    }

    /// Short identifier used in sweep tables.
    pub fn id(&self) -> String {
        match self {
            KGenerator::Slit { fraction } => format!("slit-{fraction}"),
            KGenerator::Comb {
                fraction, teeth, ..
            } => format!("comb{teeth}-{fraction}"),
            KGenerator::LShape {
                fraction,
                arm_fraction,
            } => format!("l-{fraction}-{arm_fraction}"),
            KGenerator::RandomPath { fraction, seed } => format!("path{seed}-{fraction}"),
            KGenerator::LeftHalf => "left-half".into(),
            KGenerator::Explicit { sites } => format!("explicit{}", sites.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub k_id: String,
    pub n: u32,
    pub start: Site,
    pub p_f: f64,
    pub p_cond: f64,
    /// Final SOR residual of the exact solve.
    pub residual: f64,
    pub method: &'static str,
}

/// Exact conditional probabilities over every `(K, N, start)` combination.
/// Starts must satisfy `x1 ≥ 0` and lie in `Q(0, N/16)`.
pub fn masson_sweep(
    family: &str,
    ks: &[KGenerator],
    ns: &[u32],
    starts: &[Site],
    norm: LatticeNorm,
) -> Result<Vec<SweepRow>, LatticeError> {
    let jobs: Vec<(&KGenerator, u32)> = ks
        .iter()
        .flat_map(|k| ns.iter().map(move |&n| (k, n)))
        .collect();
    for &(_, n) in &jobs {
        for &s in starts {
            if s.0 < 0 || !LatticeNorm::Euclidean.within((16 * s.0, 16 * s.1), n) {
                return Err(LatticeError::BadSweepStart(s));
            }
        }
    }
    let solved = jobs
        .par_iter()
        .map(|&(k, n)| {
            let prob = LatticeProblem::new(n, k.generate(n, norm), (0, 0), norm)?;
            let base = exact_solve(&prob)?;
            let mut rows = Vec::with_capacity(starts.len());
            for &s in starts {
                let sol = if s == (0, 0) {
                    base.clone()
                } else {
                    // The fields do not depend on the start; only the
                    // first-step average does.
                    let p = prob.with_start(s)?;
                    rebased(&base, &p)
                };
                rows.push(SweepRow {
                    family: family.to_string(),
                    k_id: k.id(),
                    n,
                    start: s,
                    p_f: sol.start_values().1,
                    p_cond: sol.conditional(),
                    residual: sol.residual,
                    method: "exact",
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, LatticeError>>()?;
    Ok(solved.into_iter().flatten().collect())
}

fn rebased(sol: &ExactSolution, prob: &LatticeProblem) -> ExactSolution {
    let (x, y) = prob.start;
    let avg = |f: &[f64]| {
        0.25 * [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
            .iter()
            .map(|&s| f[sol.idx(s).expect("start inside Q")])
            .sum::<f64>()
    };
    ExactSolution {
        start: prob.start,
        start_values: (avg(&sol.p_exit_w), avg(&sol.p_f)),
        ..sol.clone()
    }
}

pub fn sweep_min(rows: &[SweepRow]) -> f64 {
    rows.iter().map(|r| r.p_cond).fold(f64::INFINITY, f64::min)
}

/// CSV with columns `family,K_id,N,start,p_F,p_cond,method`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("family,K_id,N,start,p_F,p_cond,method\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},({};{}),{:.16e},{:.16e},{}",
            r.family, r.k_id, r.n, r.start.0, r.start.1, r.p_f, r.p_cond, r.method
        );
    }
    s
}
