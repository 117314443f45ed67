use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::time::Instant;

use super::config::ScenarioConfig;
use super::families::{double_ratio_pairs, FamilySpec, Member};
use super::report::{csv_field, fmt_f64, Artifact, Relation, ReportRow};
use super::{lookup, ScenarioOutput};
use crate::fdsolver::{solve_targets, FdConfig, FdSolution, Target};
use crate::geometry::{ConeSpec, Domain, ObstacleShape, Point};
use crate::kernel::{h_beta_quad, lemma24_grid, lemma25_grid, CapSpec, INEQUALITY_SLACK};
use crate::lattice::{masson_mc, masson_sweep, sweep_csv, LatticeProblem, RESIDUAL_TOL};
use crate::qhyp::{
    envelope_samples, fit_qhbc, good_set_check, largest_stable_tau, qh_distance, ss_sweep,
    GoodSetConfig, GoodSetReport, QhGraph, DIVERGENCE_RATIO,
};
use crate::simulate::{estimate_hit, estimate_ratio_bound, estimate_uv, exit_census};
use crate::simulate::{PairedEstimate, RngStream, WosConfig};
use crate::stats::{derive_seed, linear_fit};
use crate::{Error, Result};

/// Slack on quadrature comparisons, above the quadrature tolerance.
const QUAD_SLACK: f64 = 1e-7;
const AXIS_POINTS: usize = 50;
const LEFT_HALF_SAMPLES: usize = 200;
/// Allowed spread (max/min, or median/min) of a constant across a family.
const FAMILY_SPREAD: f64 = 3.0;
/// Allowed relative change of the family minimum when `N` doubles.
const LATTICE_DRIFT: f64 = 0.2;
/// Allowed relative change of a double ratio between the two finest grids.
const GRID_HALVING_REL: f64 = 0.1;
const SLOPE_TOL: f64 = 0.3;

fn at<T, E: Into<Error>>(claim: &'static str, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| Error::Claim {
        claim,
        source: Box::new(e.into()),
    })
}

struct Sink {
    scenario: String,
    rows: Vec<ReportRow>,
    artifacts: Vec<Artifact>,
    clock: Instant,
}

impl Sink {
    fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            rows: Vec::new(),
            artifacts: Vec::new(),
            clock: Instant::now(),
        }
    }

    /// Restarts the clock used for the runtime of subsequent rows.
    fn mark(&mut self) {
        self.clock = Instant::now();
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        claim: &'static str,
        label: impl Into<String>,
        measured: f64,
        uncertainty: f64,
        threshold: f64,
        tolerance: f64,
        relation: Relation,
    ) {
        debug_assert!(
            lookup(&self.scenario).is_some_and(|s| s.claims.contains(&claim)),
            "{claim} is not declared for {}",
            self.scenario
        );
        let mut row = ReportRow::new(
            &self.scenario,
            claim,
            label,
            measured,
            uncertainty,
            threshold,
            tolerance,
            relation,
        );
        row.runtime_s = self.clock.elapsed().as_secs_f64();
        self.rows.push(row);
    }

    fn info(&mut self, claim: &'static str, label: impl Into<String>, measured: f64, unc: f64) {
        self.push(claim, label, measured, unc, f64::NAN, f64::NAN, Relation::Info);
    }

    fn finish(self) -> ScenarioOutput {
        ScenarioOutput {
            rows: self.rows,
            artifacts: self.artifacts,
        }
    }
}

pub(super) fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut s = Sink::new(&cfg.scenario);
    match cfg.scenario.as_str() {
        "lemma-grid" => lemma_grid(cfg, &mut s)?,
        "cone-exit" => cone_exit(cfg, &mut s)?,
        "bhp-uniform" => bhp_uniform(cfg, &mut s)?,
        "masson" => masson(cfg, &mut s)?,
        "counterexample-d3" => counterexample(cfg, &mut s)?,
        "qhbc-suite" => qhbc_suite(cfg, &mut s)?,
        "carleson" => planar(cfg, &mut s, false)?,
        "bhp-2d-general" => planar(cfg, &mut s, true)?,
        "engine-xval" => engine_xval(cfg, &mut s)?,
        other => {
            return Err(Error::Config(super::config::ConfigErrors(vec![
                super::config::ConfigIssue::Key {
                    path: "scenario".into(),
                    message: format!("unknown scenario `{other}`"),
                },
            ])))
        }
    }
    Ok(s.finish())
}

fn wos(cfg: &ScenarioConfig) -> WosConfig {
    WosConfig {
        shell_eps: cfg.shell_eps,
        ..WosConfig::with_paths(cfg.paths)
    }
}

fn fd(cfg: &ScenarioConfig) -> FdConfig {
    FdConfig {
        tol: cfg.fd_tol,
        ..FdConfig::new(cfg.fd_cells)
    }
}

fn domain(claim: &'static str, obstacles: &[ObstacleShape]) -> Result<Domain> {
    at(claim, Domain::new(2, obstacles.to_vec(), 1.0))
}

fn cap(cfg: &ScenarioConfig, d: usize) -> Result<CapSpec> {
    let beta = cfg.beta_for(d);
    let c = if cfg.allow_beta_above_alpha {
        CapSpec::unrestricted(beta, d)
    } else {
        CapSpec::new(beta, d)
    };
    at("axis-exit-monotone", c)
}

const POINT_CSV_HEADER: &str = "scenario,d,point,n,count_u,count_v,u_hat,v_hat,ci_lo_u,ci_hi_u,ci_lo_v,ci_hi_v,censored,seed\n";

fn point_line(out: &mut String, tag: &str, p: &Point, e: &PairedEstimate, seed: u64) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        csv_field(tag),
        p.dim(),
        p,
        e.n,
        e.count_u,
        e.count_v,
        fmt_f64(e.u_hat),
        fmt_f64(e.v_hat),
        fmt_f64(e.ci_u.0),
        fmt_f64(e.ci_u.1),
        fmt_f64(e.ci_v.0),
        fmt_f64(e.ci_v.1),
        e.censored,
        seed
    );
}

fn lemma_grid(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    for &d in &cfg.dimensions {
        s.mark();
        let g = at("ratio-power-gap", lemma24_grid(d, cfg.lemma24_grid))?;
        s.push(
            "ratio-power-gap",
            format!("d={d}:min gap over {} nodes", g.grid_size),
            g.worst_gap,
            0.0,
            0.0,
            INEQUALITY_SLACK,
            Relation::AtLeast,
        );
        s.mark();
        let g = at("reflection-sum-bound", lemma25_grid(d, cfg.lemma25_grid))?;
        s.push(
            "reflection-sum-bound",
            format!("d={d}:max over {} nodes", g.grid_size),
            2.0 - g.worst_gap,
            0.0,
            2.0,
            INEQUALITY_SLACK,
            Relation::AtMost,
        );
    }
    Ok(())
}

/// Uniform point of the left half ball `{|x| < 1, x_1 < 0}`.
fn left_half_point(rng: &mut RngStream, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = crate::geometry::norm(&g);
        let r = rng.uniform().powf(1.0 / d as f64);
        if n == 0.0 || g[0] == 0.0 || r == 0.0 {
            continue;
        }
        let mut x: Vec<f64> = g.iter().map(|c| c * r / n).collect();
        x[0] = -x[0].abs();
        return x;
    }
}

fn cone_exit(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    for &d in &cfg.dimensions {
        s.mark();
        let cap = cap(cfg, d)?;
        let h = |x: &[f64], claim| at(claim, h_beta_quad(x, &cap, cfg.quad_tol));
        let h0 = h(&vec![0.0; d], "axis-exit-monotone")?;
        let mut axis_min = f64::INFINITY;
        for k in 1..=AXIS_POINTS {
            let mut x = vec![0.0; d];
            x[0] = k as f64 / (AXIS_POINTS + 1) as f64;
            axis_min = axis_min.min(h(&x, "axis-exit-monotone")?);
        }
        s.push(
            "axis-exit-monotone",
            format!("d={d}:min h over {AXIS_POINTS} axis points vs h(0)"),
            axis_min,
            cfg.quad_tol,
            h0,
            QUAD_SLACK,
            Relation::AtLeast,
        );
        s.mark();
        let mut rng = RngStream::new(derive_seed(cfg.seed, 0x1000 + d as u64), 0);
        let mut left_max = f64::NEG_INFINITY;
        for _ in 0..LEFT_HALF_SAMPLES {
            let x = left_half_point(&mut rng, d);
            left_max = left_max.max(h(&x, "left-half-exit-bound")?);
        }
        s.push(
            "left-half-exit-bound",
            format!("d={d}:max h over {LEFT_HALF_SAMPLES} left-half points vs h(0)"),
            left_max,
            cfg.quad_tol,
            h0,
            QUAD_SLACK,
            Relation::AtMost,
        );
    }

    let points = cfg.resolved_points();
    let Some(d) = points.first().map(Point::dim) else {
        return Ok(());
    };
    const CLAIM: &str = "conditional-cone-exit-lower-bound";
    let dom = at(CLAIM, Domain::new(d, cfg.resolved_obstacles(), 1.0))?;
    let beta = cfg.beta_for(d);
    let cone = at(CLAIM, ConeSpec::new(beta))?;
    let c_beta = at(CLAIM, CapSpec::unrestricted(beta, d))?.center_value();
    let base = derive_seed(cfg.seed, 0x2000);
    let mut csv = String::from(POINT_CSV_HEADER);
    for (i, p) in points.iter().enumerate() {
        s.mark();
        let seed = derive_seed(base, i as u64);
        let e = at(CLAIM, estimate_uv(p, &dom, &cone, &wos(cfg), seed))?;
        point_line(&mut csv, &cfg.scenario, p, &e, seed);
        let sigma = e.ratio_sigma();
        s.push(
            CLAIM,
            format!("x={p}:u/v vs h(0)"),
            e.ratio(),
            sigma,
            c_beta,
            3.0 * sigma,
            Relation::AtLeast,
        );
    }
    s.artifacts.push(Artifact {
        file_name: "cone-exit_points.csv".into(),
        contents: csv,
    });
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn member_seed(base: u64, fi: usize, mi: usize) -> u64 {
    derive_seed(derive_seed(base, fi as u64), mi as u64)
}

fn bhp_uniform(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    const UNIFORM: &str = "uniform-ratio-bound";
    const AXIS: &str = "conditional-cone-exit-lower-bound";
    let points = cfg.resolved_points();
    let beta = cfg.beta_for(2);
    let cone = at(UNIFORM, ConeSpec::new(beta))?;
    let c_beta = at(UNIFORM, CapSpec::unrestricted(beta, 2))?.center_value();
    let mut csv = String::from(POINT_CSV_HEADER);
    for (fi, fam) in cfg.resolved_families().iter().enumerate() {
        let mut mins = Vec::new();
        for (mi, m) in fam.members.iter().enumerate() {
            s.mark();
            let dom = domain(UNIFORM, &m.obstacles)?;
            let seed = member_seed(cfg.seed, fi, mi);
            let rep = at(UNIFORM, estimate_ratio_bound(&points, &dom, &cone, &wos(cfg), seed))?;
            let tag = format!("{}/{}", fam.name, m.id);
            for (i, row) in rep.rows.iter().enumerate() {
                point_line(&mut csv, &tag, &row.point, &row.estimate, derive_seed(seed, i as u64));
            }
            let lo = rep
                .rows
                .iter()
                .min_by(|a, b| a.estimate.ratio().total_cmp(&b.estimate.ratio()))
                .expect("at least one test point");
            s.push(
                UNIFORM,
                format!("{tag}:min u/v over {} points", rep.rows.len()),
                lo.estimate.ratio(),
                lo.estimate.ratio_sigma(),
                0.0,
                0.0,
                Relation::Above,
            );
            mins.push(lo.estimate.ratio());
            for row in rep.rows.iter().filter(|r| r.point[1] == 0.0) {
                let sigma = row.estimate.ratio_sigma();
                s.push(
                    AXIS,
                    format!("{tag}:x={}:u/v vs h(0)", row.point),
                    row.estimate.ratio(),
                    sigma,
                    c_beta,
                    3.0 * sigma,
                    Relation::AtLeast,
                );
            }
            s.info(
                UNIFORM,
                format!("{tag}:worst double ratio"),
                rep.worst_double_ratio,
                0.5 * (rep.ci.1 - rep.ci.0),
            );
        }
        let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
        s.push(
            UNIFORM,
            format!("{}:median/min of per-member minima", fam.name),
            median(&mins) / lo,
            0.0,
            FAMILY_SPREAD,
            0.0,
            Relation::AtMost,
        );
    }
    s.artifacts.push(Artifact {
        file_name: "bhp-uniform_points.csv".into(),
        contents: csv,
    });
    Ok(())
}

fn masson(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    const LOWER: &str = "lattice-cone-exit-lower-bound";
    const RATIO: &str = "lattice-ratio-bound";
    let lat = &cfg.lattice;
    s.mark();
    let sweep = at(
        LOWER,
        masson_sweep("masson", &lat.generators, &lat.sizes, &lat.starts, lat.norm),
    )?;
    s.artifacts.push(Artifact {
        file_name: "masson_sweep.csv".into(),
        contents: sweep_csv(&sweep),
    });
    let per_case = lat.starts.len();
    for chunk in sweep.chunks(per_case) {
        let r = &chunk[0];
        s.push(
            LOWER,
            format!("K={},N={}:SOR residual", r.k_id, r.n),
            r.residual,
            0.0,
            RESIDUAL_TOL,
            0.0,
            Relation::AtMost,
        );
    }
    // Sweep rows come ordered by generator, then size, then start.
    let base = derive_seed(cfg.seed, 0x3000);
    for (idx, r) in sweep.iter().enumerate() {
        if r.n > lat.mc_max_n {
            continue;
        }
        s.mark();
        let g = &lat.generators[idx / (per_case * lat.sizes.len())];
        let prob = at(LOWER, LatticeProblem::new(r.n, g.generate(r.n, lat.norm), r.start, lat.norm))?;
        let e = masson_mc(&prob, lat.walks, derive_seed(base, idx as u64));
        s.push(
            LOWER,
            format!("K={},N={},start=({};{}):Monte Carlo vs exact", r.k_id, r.n, r.start.0, r.start.1),
            e.conditional.unwrap_or(f64::NAN),
            e.sigma,
            r.p_cond,
            3.0 * e.sigma,
            Relation::Within,
        );
    }
    let mut sizes = lat.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut prev: Option<(u32, f64)> = None;
    for &n in &sizes {
        let rows: Vec<_> = sweep.iter().filter(|r| r.n == n).collect();
        let min = rows.iter().map(|r| r.p_cond).fold(f64::INFINITY, f64::min);
        s.push(LOWER, format!("N={n}:family minimum"), min, 0.0, 0.0, 0.0, Relation::Above);
        if let Some((m, pm)) = prev.filter(|&(m, _)| 2 * m == n) {
            s.push(
                LOWER,
                format!("N={m}->{n}:relative change of family minimum"),
                (min / pm - 1.0).abs(),
                0.0,
                LATTICE_DRIFT,
                0.0,
                Relation::AtMost,
            );
        }
        prev = Some((n, min));
        let spread = rows
            .chunks(per_case)
            .map(|c| {
                let hi = c.iter().map(|r| r.p_cond).fold(0.0, f64::max);
                let lo = c.iter().map(|r| r.p_cond).fold(f64::INFINITY, f64::min);
                hi / lo
            })
            .fold(0.0, f64::max);
        s.info(RATIO, format!("N={n}:max over K of start-to-start spread"), spread, 0.0);
    }
    Ok(())
}

fn counterexample(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    const HIT: &str = "hitting-probability-closed-form";
    const SCALE: &str = "hole-counterexample-scaling";
    let y = cfg.resolved_points()[0].clone();
    let d = y.dim();
    let origin = Point::origin(d);
    let base = derive_seed(cfg.seed, 0x4000);
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &delta) in cfg.deltas.iter().enumerate() {
        s.mark();
        let dom = at(HIT, Domain::new(d, vec![ObstacleShape::ball(origin.clone(), delta)], 1.0))?;
        let p = at(HIT, estimate_hit(&y, &dom, &wos(cfg), derive_seed(base, i as u64)))?;
        // Radial harmonic function r^{2-d} in the annulus δ < r < 1.
        let e = 2.0 - d as f64;
        let exact = (y.norm().powf(e) - 1.0) / (delta.powf(e) - 1.0);
        s.push(
            HIT,
            format!("delta={delta}:P(hit ball before sphere)"),
            p.estimate,
            p.sigma,
            exact,
            3.0 * p.sigma,
            Relation::Within,
        );
        xs.push(delta.ln());
        ys.push(p.estimate.ln());
        ws.push(p.sigma / p.estimate);
    }
    let (slope, _) = linear_fit(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sigma = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| ((x - mx) / sxx * w).powi(2))
        .sum::<f64>()
        .sqrt();
    s.push(
        SCALE,
        "slope of log P(hit) against log delta",
        slope,
        sigma,
        d as f64 - 2.0,
        SLOPE_TOL,
        Relation::Within,
    );

    // The obstacle itself: the flat disc through the origin with a hole.
    let info_cfg = WosConfig::with_paths((cfg.paths / 10).max(1));
    let info_cfg = WosConfig {
        shell_eps: cfg.shell_eps,
        ..info_cfg
    };
    let mut ratios = Vec::new();
    for (i, &delta) in cfg.deltas.iter().enumerate() {
        s.mark();
        let disc = ObstacleShape::hyperplane_disc(origin.clone(), 0, 1.0, delta);
        let dom = at(SCALE, Domain::new(d, vec![disc], 1.0))?;
        let seed = derive_seed(base, 0x100 + i as u64);
        let c = at(SCALE, exit_census(&y, &dom, &info_cfg, seed, |p| p[0] < 0.0))?;
        at(SCALE, c.check_censoring())?;
        let e = PairedEstimate::from_counts(c.n, c.sphere_in_target, c.sphere, c.censored);
        s.info(SCALE, format!("delta={delta}:u_-/v at y with the holed disc"), e.ratio(), e.ratio_sigma());
        ratios.push((delta.ln(), e.ratio().ln()));
    }
    if ratios.iter().all(|r| r.1.is_finite()) {
        let (x, yv): (Vec<f64>, Vec<f64>) = ratios.into_iter().unzip();
        s.info(SCALE, "slope of log(u_-/v) against log delta with the holed disc", linear_fit(&x, &yv).0, f64::NAN);
    }
    Ok(())
}

fn good_set_rows(s: &mut Sink, tag: &str, rep: &GoodSetReport, g: &GoodSetConfig) {
    for (k, root) in rep.roots.iter().enumerate() {
        s.push(
            "qh-boundary-condition",
            format!("{tag}:root{}:C1", k + 1),
            root.fit.c1,
            0.0,
            g.max_c1,
            0.0,
            Relation::AtMost,
        );
        s.push(
            "qh-boundary-condition",
            format!("{tag}:root{}:envelope excess over the fitted line", k + 1),
            root.fit.max_violation,
            0.0,
            g.max_violation,
            0.0,
            Relation::AtMost,
        );
    }
    s.push(
        "good-set",
        format!("{tag}:is good"),
        if rep.is_good { 1.0 } else { 0.0 },
        0.0,
        1.0,
        0.0,
        Relation::AtLeast,
    );
}

fn check_good(cfg: &ScenarioConfig, dom: &Domain) -> Result<GoodSetReport> {
    at("good-set", good_set_check(dom, cfg.r, cfg.eps, &cfg.good_set))
}

fn qhbc_suite(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    const BALL: &str = "quasihyperbolic-ball";
    const SS: &str = "qh-exponential-integrability";
    const QHBC: &str = "qh-boundary-condition";
    let disc = at(BALL, Domain::unit_ball(2))?;
    let origin = Point::origin(2);
    let h = cfg.qh_spacing;
    s.mark();
    let k = at(BALL, qh_distance(&disc, &origin, &Point::from([0.5, 0.0]), h))?;
    s.push(BALL, "k(0,(0.5;0)) in the unit disc vs log 2", k.value, k.estimate, LN_2, 0.02 * LN_2, Relation::Within);

    s.mark();
    let mut taus = vec![0.5, 2.0];
    taus.extend(&cfg.taus);
    let sweep = at(SS, ss_sweep(&disc, &origin, &taus, h))?;
    let closed = |t: f64| 2.0 * PI / ((1.0 - t) * (2.0 - t));
    let t05 = &sweep[0];
    s.push(
        SS,
        "unit disc:tau=0.5 vs 8pi/3",
        t05.value,
        (t05.value - t05.coarse_value).abs(),
        closed(0.5),
        0.03 * closed(0.5),
        Relation::Within,
    );
    s.push(
        SS,
        "unit disc:tau=2:fine/coarse cell-sum ratio",
        sweep[1].ratio,
        0.0,
        DIVERGENCE_RATIO,
        0.0,
        Relation::AtLeast,
    );
    for t in &sweep[2..] {
        s.info(SS, format!("unit disc:tau={}:integral", t.tau), t.value, (t.value - t.coarse_value).abs());
    }
    if let Some(t) = largest_stable_tau(&sweep[2..]) {
        s.info(SS, "unit disc:largest stable tau of the sweep", t, 0.0);
    }

    s.mark();
    let g = at(QHBC, QhGraph::new(&disc, 0.5 * h))?;
    let field = at(QHBC, g.field(&origin))?;
    // Sample d over [1/125, 1], a little over two decades.
    let samples = envelope_samples(&field, 1.0, 0.008, cfg.good_set.bins);
    let fit = at(QHBC, fit_qhbc(1.0, &samples))?;
    s.push(QHBC, "unit disc:C1", fit.c1, 0.0, 1.0, 0.05, Relation::Within);
    s.info(QHBC, "unit disc:C2", fit.c2, 0.0);

    let mut csv = format!("{}\n", GoodSetReport::CSV_HEADER);
    for fam in cfg.resolved_families() {
        for m in &fam.members {
            s.mark();
            let dom = domain("good-set", &m.obstacles)?;
            let rep = check_good(cfg, &dom)?;
            let tag = format!("{}/{}", fam.name, m.id);
            let _ = writeln!(csv, "{}", rep.csv_row(&csv_field(&tag)));
            good_set_rows(s, &tag, &rep, &cfg.good_set);
        }
    }
    s.artifacts.push(Artifact {
        file_name: "qhbc-suite_goodset.csv".into(),
        contents: csv,
    });
    Ok(())
}

struct PlanarMember {
    carleson: f64,
    double_ratio: Option<(f64, f64)>,
}

fn double_ratio(u: &FdSolution, v: &FdSolution, pairs: &[(Point, Point)]) -> Result<(f64, f64)> {
    const CLAIM: &str = "planar-ratio-bound";
    let (mut worst, mut rel) = (0.0f64, 0.0f64);
    for (x, y) in pairs {
        let [ux, vx, uy, vy] = [(u, x), (v, x), (u, y), (v, y)].map(|(f, p)| at(CLAIM, f.evaluate(p)));
        let (ux, vx, uy, vy) = (ux?, vx?, uy?, vy?);
        let fine = (ux.value / vx.value) / (uy.value / vy.value);
        let coarse = (ux.coarse_value / vx.coarse_value) / (uy.coarse_value / vy.coarse_value);
        let (fine, coarse) = (fine.max(1.0 / fine), coarse.max(1.0 / coarse));
        worst = worst.max(fine);
        rel = rel.max((fine - coarse).abs() / fine);
    }
    Ok((worst, rel))
}

fn planar_member(
    cfg: &ScenarioConfig,
    s: &mut Sink,
    tag: &str,
    m: &Member,
    with_ratio: bool,
    pairs: &[(Point, Point)],
) -> Result<PlanarMember> {
    const CARLESON: &str = "rooted-carleson";
    s.mark();
    let dom = domain("good-set", &m.obstacles)?;
    let rep = check_good(cfg, &dom)?;
    good_set_rows(s, tag, &rep, &cfg.good_set);

    s.mark();
    let u = Target::Arc {
        from: -PI / 3.0,
        to: PI / 3.0,
    };
    let v = Target::Arc {
        from: 2.0 * PI / 3.0,
        to: 4.0 * PI / 3.0,
    };
    let targets = if with_ratio { vec![u, v] } else { vec![u] };
    let sols = at(CARLESON, solve_targets(&dom, &targets, &fd(cfg)))?;
    let w0 = Point::from([cfg.r, 0.0]);
    let u_w0 = at(CARLESON, sols[0].value(&w0))?;
    let mut c = 0.0f64;
    for (k, root) in rep.roots.iter().enumerate() {
        let (max, _) = sols[0]
            .max_in_ball(&root.root, 0.5 * cfg.r * cfg.eps)
            .unwrap_or((f64::NAN, Vec::new()));
        let ck = max / u_w0;
        s.info(CARLESON, format!("{tag}:root{}:max u/u(w0) in B(root, r eps/2)", k + 1), ck, 0.0);
        c = c.max(ck);
    }
    let double_ratio = if with_ratio {
        let (worst, rel) = double_ratio(&sols[0], &sols[1], pairs)?;
        s.info("planar-ratio-bound", format!("{tag}:max double ratio over {} pairs", pairs.len()), worst, rel * worst);
        s.push(
            "planar-ratio-bound",
            format!("{tag}:relative change of the double ratio on grid halving"),
            rel,
            0.0,
            GRID_HALVING_REL,
            0.0,
            Relation::AtMost,
        );
        Some((worst, rel))
    } else {
        None
    };
    Ok(PlanarMember {
        carleson: c,
        double_ratio,
    })
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn planar(cfg: &ScenarioConfig, s: &mut Sink, with_ratio: bool) -> Result<()> {
    let pairs: Vec<(Point, Point)> = match &cfg.points {
        Some(p) => p.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect(),
        None => double_ratio_pairs(),
    };
    for fam in cfg.resolved_families() {
        let results = family_members(cfg, s, &fam, with_ratio, &pairs)?;
        s.mark();
        let cs: Vec<f64> = results.iter().map(|r| r.carleson).collect();
        s.push(
            "rooted-carleson",
            format!("{}:max/min of the Carleson constant", fam.name),
            spread(&cs),
            0.0,
            FAMILY_SPREAD,
            0.0,
            Relation::Below,
        );
        if with_ratio {
            let drs: Vec<f64> = results.iter().filter_map(|r| r.double_ratio.map(|d| d.0)).collect();
            s.push(
                "planar-ratio-bound",
                format!("{}:max/min of the double-ratio constant", fam.name),
                spread(&drs),
                0.0,
                FAMILY_SPREAD,
                0.0,
                Relation::Below,
            );
        }
    }
    Ok(())
}

fn family_members(
    cfg: &ScenarioConfig,
    s: &mut Sink,
    fam: &FamilySpec,
    with_ratio: bool,
    pairs: &[(Point, Point)],
) -> Result<Vec<PlanarMember>> {
    fam.members
        .iter()
        .map(|m| planar_member(cfg, s, &format!("{}/{}", fam.name, m.id), m, with_ratio, pairs))
        .collect()
}

fn engine_xval(cfg: &ScenarioConfig, s: &mut Sink) -> Result<()> {
    const CLAIM: &str = "engine-agreement";
    let beta = cfg.beta_for(2);
    let cone = at(CLAIM, ConeSpec::new(beta))?;
    let targets = [
        Target::Cone {
            half_angle: beta,
            axis: 0,
        },
        Target::Sphere,
    ];
    let points = cfg.resolved_points();
    let mut csv = String::from(POINT_CSV_HEADER);
    for (fi, fam) in cfg.resolved_families().iter().enumerate() {
        for (mi, m) in fam.members.iter().enumerate() {
            s.mark();
            let dom = domain(CLAIM, &m.obstacles)?;
            let sols = at(CLAIM, solve_targets(&dom, &targets, &fd(cfg)))?;
            let base = member_seed(derive_seed(cfg.seed, 0x5000), fi, mi);
            for (i, p) in points.iter().enumerate() {
                let seed = derive_seed(base, i as u64);
                let e = at(CLAIM, estimate_uv(p, &dom, &cone, &wos(cfg), seed))?;
                let tag = format!("{}/{}", fam.name, m.id);
                point_line(&mut csv, &tag, p, &e, seed);
                let fu = at(CLAIM, sols[0].evaluate(p))?;
                let fv = at(CLAIM, sols[1].evaluate(p))?;
                for (name, mc, sigma, f) in [("u", e.u_hat, e.sigma_u(), fu), ("v", e.v_hat, e.sigma_v(), fv)] {
                    s.push(
                        CLAIM,
                        format!("{tag}:x={p}:|{name} WoS - {name} FD|"),
                        (mc - f.value).abs(),
                        sigma,
                        (3.0 * sigma).max(2.0 * f.error_estimate),
                        0.0,
                        Relation::AtMost,
                    );
                }
            }
        }
    }
    s.artifacts.push(Artifact {
        file_name: "engine-xval_points.csv".into(),
        contents: csv,
    });
    Ok(())
}
