//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Built with `harness = false` so the
//! lines always reach the test log.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use bhp_core::scenarios::{parse_config, run_scenario, ReportRow};

const SEED: u64 = 20_240_601;

struct Run {
    rows: Vec<ReportRow>,
    secs: f64,
}

fn run(json: &str) -> Result<Run, String> {
    let cfg = parse_config(json).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    Ok(Run {
        rows: out.rows,
        secs: t.elapsed().as_secs_f64(),
    })
}

fn config(scenario: &str, extra: &str) -> String {
    let sep = if extra.is_empty() { "" } else { ", " };
    format!(r#"{{"scenario": "{scenario}", "seed": {SEED}{sep}{extra}}}"#)
}

impl Run {
    fn with<'a>(&'a self, claim: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.claim == claim)
    }

    fn labelled(&self, claim: &str, needle: &str) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.claim == claim && r.label.contains(needle))
            .collect()
    }

    fn failures(&self, claims: &[&str]) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| claims.contains(&r.claim) && !r.pass)
            .map(|r| format!("{} [{}] measured {:e} vs {:e}", r.label, r.claim, r.measured, r.threshold))
            .collect()
    }
}

/// Problems found for one criterion; empty means PASS.
#[derive(Default)]
struct Verdict(Vec<String>);

impl Verdict {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    fn runtime(&mut self, secs: f64, limit: f64) {
        self.check(secs < limit, || format!("runtime {secs:.1} s over the {limit} s budget"));
    }

    fn rows_pass(&mut self, run: &Run, claims: &[&str]) {
        self.0.extend(run.failures(claims));
    }
}

fn report(n: usize, title: &str, secs: f64, v: Result<Verdict, String>) -> bool {
    let v = v.unwrap_or_else(|e| Verdict(vec![format!("error: {e}")]));
    let ok = v.0.is_empty();
    println!("{} criterion {n:>2}: {title} ({secs:.1} s)", if ok { "PASS" } else { "FAIL" });
    for p in &v.0 {
        println!("      {p}");
    }
    ok
}

fn alpha(d: f64) -> f64 {
    (1.0 / (4.0 * (d + 2.0)).sqrt()).asin()
}

fn main() {
    let mut all = true;

    // Criteria 1 and 2 come from one lemma-grid run; the whole run is held to
    // the tighter budget.
    let lemma = run(&config("lemma-grid", ""));
    let secs = lemma.as_ref().map_or(0.0, |r| r.secs);
    all &= report(1, "ratio-power gap grid, d = 2..10, 1e5 nodes", secs, lemma.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let rows: Vec<_> = r.with("ratio-power-gap").collect();
        v.check(rows.len() == 9, || format!("{} dimensions checked, expected 9", rows.len()));
        for d in 2..=10 {
            let hit = rows.iter().any(|x| x.label == format!("d={d}:min gap over 100000 nodes"));
            v.check(hit, || format!("no 1e5-node row for d = {d}"));
        }
        v.check(rows.iter().all(|x| x.threshold == 0.0 && x.tolerance == 1e-12), || "slack is not 1e-12".into());
        v.rows_pass(r, &["ratio-power-gap"]);
        v.runtime(r.secs, 10.0);
        v
    }));
    all &= report(2, "reflection-sum grid, d = 2..10, 1e3 x 1e3", secs, lemma.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let rows: Vec<_> = r.with("reflection-sum-bound").collect();
        v.check(rows.len() == 9, || format!("{} dimensions checked, expected 9", rows.len()));
        v.check(rows.iter().all(|x| x.label.contains("1000000 nodes")), || "grid is not 1e3 x 1e3".into());
        v.check(rows.iter().all(|x| x.threshold == 2.0 && x.tolerance == 1e-12), || "bound is not 2 + 1e-12".into());
        v.rows_pass(r, &["reflection-sum-bound"]);
        v.runtime(r.secs, 30.0);
        v
    }));

    let cone = run(&config("cone-exit", ""));
    let secs = cone.as_ref().map_or(0.0, |r| r.secs);
    all &= report(3, "cone exit on the axis and the left half ball, d = 2, 3", secs, cone.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        for d in [2, 3] {
            let axis = r.labelled("axis-exit-monotone", &format!("d={d}:min h over 50 axis points"));
            let left = r.labelled("left-half-exit-bound", &format!("d={d}:max h over 200 left-half points"));
            v.check(axis.len() == 1 && left.len() == 1, || format!("missing quadrature rows for d = {d}"));
            for x in axis.iter().chain(&left) {
                v.check(x.tolerance == 1e-7 && x.uncertainty == 1e-8, || format!("{}: slack or tolerance differs", x.label));
            }
        }
        v.rows_pass(r, &["axis-exit-monotone", "left-half-exit-bound"]);
        v.runtime(r.secs, 120.0);
        v
    }));
    all &= report(4, "u/v >= h(0) - 3 sigma on the axis, slit, 1e5 paths", secs, cone.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let c_beta = 0.5 * alpha(2.0) / PI;
        let rows: Vec<_> = r.with("conditional-cone-exit-lower-bound").collect();
        v.check(rows.len() == 3, || format!("{} axis points, expected 3", rows.len()));
        for x in &rows {
            v.check((x.threshold - c_beta).abs() < 1e-9, || format!("{}: threshold {} differs from beta/pi = {c_beta}", x.label, x.threshold));
            v.check((x.tolerance - 3.0 * x.uncertainty).abs() <= 1e-15, || format!("{}: tolerance is not 3 sigma", x.label));
        }
        v.rows_pass(r, &["conditional-cone-exit-lower-bound"]);
        v.runtime(r.secs, 180.0);
        v
    }));

    let uni = run(&config("bhp-uniform", ""));
    all &= report(5, "min u/v positive and stable over the adversarial family", uni.as_ref().map_or(0.0, |r| r.secs), uni.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let mins = r.labelled("uniform-ratio-bound", "min u/v over 10 points");
        v.check(mins.len() == 5, || format!("{} family members, expected 5", mins.len()));
        let spread = r.labelled("uniform-ratio-bound", "median/min of per-member minima");
        v.check(spread.len() == 1 && spread[0].threshold == 3.0, || "missing family spread row with factor 3".into());
        let vals: Vec<f64> = mins.iter().map(|x| x.measured).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        v.check(!sorted.is_empty() && lo > 0.0 && sorted[sorted.len() / 2] < 3.0 * lo, || format!("minima {vals:?} are not within a factor 3 of their median"));
        v.rows_pass(r, &["uniform-ratio-bound", "conditional-cone-exit-lower-bound"]);
        v.runtime(r.secs, 900.0);
        v
    }));

    let mas = run(&config("masson", ""));
    all &= report(6, "lattice exact and Monte Carlo agreement, N = 16, 32, 64", mas.as_ref().map_or(0.0, |r| r.secs), mas.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        // One exact solve per (K, N) serves every start.
        let resid = r.labelled("lattice-cone-exit-lower-bound", "SOR residual");
        v.check(!resid.is_empty() && resid.iter().all(|x| x.threshold == 1e-12), || "residual threshold is not 1e-12".into());
        let cases = r.labelled("lattice-cone-exit-lower-bound", "Monte Carlo vs exact");
        v.check(cases.len() >= 20, || format!("only {} (N, K, start) cases", cases.len()));
        v.check(cases.iter().all(|x| x.tolerance == 3.0 * x.uncertainty), || "Monte Carlo tolerance is not 3 sigma".into());
        let positive = r.labelled("lattice-cone-exit-lower-bound", ":family minimum");
        v.check(positive.len() == 3, || "missing per-N family minimum rows".into());
        let drift = r.labelled("lattice-cone-exit-lower-bound", "relative change of family minimum");
        v.check(drift.len() == 2 && drift.iter().all(|x| x.threshold == 0.2), || "missing 20% doubling checks".into());
        v.rows_pass(r, &["lattice-cone-exit-lower-bound", "lattice-ratio-bound"]);
        v.runtime(r.secs, 600.0);
        v
    }));

    let ce = run(&config("counterexample-d3", ""));
    all &= report(7, "hole counterexample in d = 3, 1e6 paths", ce.as_ref().map_or(0.0, |r| r.secs), ce.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let hits: Vec<_> = r.with("hitting-probability-closed-form").collect();
        v.check(hits.len() == 3, || format!("{} deltas, expected 3", hits.len()));
        for (x, delta) in hits.iter().zip([0.02, 0.04, 0.08]) {
            let exact = (1.0 / 0.25 - 1.0) / (1.0 / delta - 1.0);
            v.check((x.threshold - exact).abs() < 1e-14, || format!("delta {delta}: threshold {} vs closed form {exact}", x.threshold));
        }
        v.check(hits.first().is_some_and(|x| (x.threshold - 3.0 / 49.0).abs() < 1e-15), || "delta = 0.02 is not 3/49".into());
        let slope = r.labelled("hole-counterexample-scaling", "slope of log P(hit)");
        v.check(slope.len() == 1 && slope[0].threshold == 1.0 && slope[0].tolerance == 0.3, || "slope row is not 1 +- 0.3".into());
        v.rows_pass(r, &["hitting-probability-closed-form", "hole-counterexample-scaling"]);
        v.runtime(r.secs, 600.0);
        v
    }));

    let qh = run(&config("qhbc-suite", r#""families": []"#));
    all &= report(8, "quasihyperbolic distance and integrals in the unit disc", qh.as_ref().map_or(0.0, |r| r.secs), qh.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let ball = r.labelled("quasihyperbolic-ball", "k(0,(0.5;0))");
        v.check(ball.len() == 1 && ball[0].threshold == LN_2, || "missing log 2 row".into());
        v.check(ball.iter().all(|x| (x.measured - LN_2).abs() <= 0.02 * LN_2), || "k(0, 1/2) is not within 2% of log 2".into());
        let t05 = r.labelled("qh-exponential-integrability", "tau=0.5 vs 8pi/3");
        let target = 8.0 * PI / 3.0;
        v.check(t05.len() == 1 && (t05[0].measured - target).abs() <= 0.03 * target, || "tau = 0.5 integral is not within 3% of 8 pi / 3".into());
        let t2 = r.labelled("qh-exponential-integrability", "tau=2:");
        v.check(t2.len() == 1 && t2[0].pass, || "tau = 2 is not flagged as divergent".into());
        v.rows_pass(r, &["quasihyperbolic-ball", "qh-exponential-integrability"]);
        v.runtime(r.secs, 60.0);
        v
    }));

    let planar = run(&config("bhp-2d-general", ""));
    all &= report(9, "good sets, Carleson and double ratio on two slit families, 2048 cells", planar.as_ref().map_or(0.0, |r| r.secs), planar.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let good = r.labelled("good-set", "is good");
        v.check(good.len() == 6, || format!("{} good-set rows, expected 6", good.len()));
        let carl: Vec<_> = r.labelled("rooted-carleson", "max u/u(w0)");
        v.check(carl.len() == 12 && carl.iter().all(|x| x.measured.is_finite() && x.measured > 0.0), || "Carleson constants missing or not finite at both roots".into());
        let stable = r.labelled("rooted-carleson", "max/min of the Carleson constant");
        v.check(stable.len() == 2, || "missing Carleson stability rows".into());
        let spread = r.labelled("planar-ratio-bound", "max/min");
        v.check(spread.len() == 2 && spread.iter().all(|x| x.threshold == 3.0), || "missing factor-3 double-ratio spread rows".into());
        let halving = r.labelled("planar-ratio-bound", "grid halving");
        v.check(halving.len() == 6, || format!("{} grid-halving rows, expected 6", halving.len()));
        v.rows_pass(r, &["good-set", "qh-boundary-condition", "rooted-carleson", "planar-ratio-bound"]);
        v.runtime(r.secs, 1200.0);
        v
    }));

    let xval = run(&config("engine-xval", ""));
    all &= report(10, "walk-on-spheres against finite differences, 10 problems", xval.as_ref().map_or(0.0, |r| r.secs), xval.as_ref().map_err(Clone::clone).map(|r| {
        let mut v = Verdict::default();
        let rows: Vec<_> = r.with("engine-agreement").collect();
        v.check(rows.len() == 20, || format!("{} comparisons, expected 20 (u and v at 10 problems)", rows.len()));
        v.rows_pass(r, &["engine-agreement"]);
        v.runtime(r.secs, 600.0);
        v
    }));

    if !all {
        std::process::exit(1);
    }
}
