//! Scenario configuration: JSON text in, a fully validated config (or every
//! problem found) out.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::families::{self, FamilySpec, Member};
use super::report::Format;
use super::{lookup, Engine};
use crate::geometry::{Domain, ObstacleShape, Point};
use crate::kernel::DimensionConstants;
use crate::lattice::{KGenerator, LatticeNorm, Site, MAX_N};
use crate::qhyp::GoodSetConfig;

/// One problem in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigIssue {
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// A problem with the value at `path` (`a.b[2].c`).
    Key { path: String, message: String },
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::Syntax {
                line,
                column,
                message,
            } => write!(f, "syntax error at line {line}, column {column}: {message}"),
            ConfigIssue::Key { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

/// Every problem found in a config, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.len();
        write!(f, "{n} config error{}", if n == 1 { "" } else { "s" })?;
        for issue in &self.0 {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeParams {
    pub sizes: Vec<u32>,
    pub walks: u64,
    /// Monte Carlo runs only for `N` up to this size.
    pub mc_max_n: u32,
    pub generators: Vec<KGenerator>,
    pub starts: Vec<Site>,
    pub norm: LatticeNorm,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            sizes: vec![16, 32, 64],
            walks: 100_000,
            mc_max_n: 64,
            generators: vec![
                KGenerator::Slit { fraction: 0.5 },
                KGenerator::Slit { fraction: 1.0 },
                KGenerator::Comb {
                    fraction: 0.75,
                    teeth: 3,
                    tooth_fraction: 0.25,
                },
                KGenerator::LShape {
                    fraction: 0.5,
                    arm_fraction: 0.25,
                },
                KGenerator::RandomPath {
                    fraction: 0.75,
                    seed: 7,
                },
                KGenerator::LeftHalf,
            ],
            starts: vec![(0, 0), (1, 0), (0, 1)],
            norm: LatticeNorm::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

/// A fully resolved scenario configuration. Fields a scenario does not use
/// are carried along unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub dimensions: Vec<usize>,
    pub engine: Engine,
    pub seed: u64,
    /// Cone half-angle; `None` means `α_d / 2` in each dimension.
    pub beta: Option<f64>,
    pub allow_beta_above_alpha: bool,
    pub obstacles: Option<Vec<ObstacleShape>>,
    pub families: Option<Vec<FamilySpec>>,
    pub points: Option<Vec<Point>>,
    pub paths: u64,
    pub shell_eps: f64,
    pub fd_cells: usize,
    pub fd_tol: f64,
    pub quad_tol: f64,
    pub lemma24_grid: usize,
    pub lemma25_grid: usize,
    pub lattice: LatticeParams,
    pub deltas: Vec<f64>,
    pub qh_spacing: f64,
    pub taus: Vec<f64>,
    pub r: f64,
    pub eps: f64,
    pub good_set: GoodSetConfig,
    pub output: OutputSpec,
}

pub const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "dimensions",
    "engine",
    "seed",
    "beta",
    "allow_beta_above_alpha",
    "obstacles",
    "families",
    "points",
    "paths",
    "shell_eps",
    "fd_cells",
    "fd_tol",
    "quad_tol",
    "lemma24_grid",
    "lemma25_grid",
    "lattice",
    "deltas",
    "qh_spacing",
    "taus",
    "r",
    "eps",
    "good_set",
    "output",
];

impl ScenarioConfig {
    /// The defaults of scenario `name`; unknown names get generic defaults.
    pub fn defaults(name: &str) -> Self {
        let engine = lookup(name).map_or(Engine::Wos, |s| s.engines[0]);
        let mut c = Self {
            scenario: name.to_string(),
            dimensions: vec![2],
            engine,
            seed: 0,
            beta: None,
            allow_beta_above_alpha: false,
            obstacles: None,
            families: None,
            points: None,
            paths: 100_000,
            shell_eps: 1e-5,
            fd_cells: 1024,
            fd_tol: 1e-8,
            quad_tol: 1e-8,
            lemma24_grid: 100_000,
            lemma25_grid: 1000,
            lattice: LatticeParams::default(),
            deltas: vec![0.02, 0.04, 0.08],
            qh_spacing: 1.0 / 256.0,
            taus: (1..=9).map(|i| i as f64 / 10.0).collect(),
            r: 0.5,
            eps: 0.1,
            good_set: GoodSetConfig::default(),
            output: OutputSpec::default(),
        };
        match name {
            "lemma-grid" => c.dimensions = (2..=10).collect(),
            "cone-exit" => c.dimensions = vec![2, 3],
            "counterexample-d3" => {
                c.dimensions = vec![3];
                c.paths = 1_000_000;
            }
            "bhp-2d-general" => c.fd_cells = 2048,
            _ => {}
        }
        c
    }

    /// `β` used in dimension `d`.
    pub fn beta_for(&self, d: usize) -> f64 {
        self.beta.unwrap_or_else(|| {
            DimensionConstants::new(d).map_or(f64::NAN, |c| 0.5 * c.alpha_d)
        })
    }

    /// Explicit families, else `obstacles` as a one-member family, else the
    /// scenario's shipped families.
    pub fn resolved_families(&self) -> Vec<FamilySpec> {
        if let Some(f) = &self.families {
            return f.clone();
        }
        if let Some(obs) = &self.obstacles {
            return vec![FamilySpec {
                name: "custom".into(),
                members: vec![Member {
                    id: "custom".into(),
                    obstacles: obs.clone(),
                }],
            }];
        }
        match self.scenario.as_str() {
            "qhbc-suite" => vec![families::qhbc_default()],
            "carleson" | "bhp-2d-general" => {
                vec![families::straight_slits(), families::bent_slits()]
            }
            _ => vec![families::adversarial_v1()],
        }
    }

    pub fn resolved_obstacles(&self) -> Vec<ObstacleShape> {
        self.obstacles
            .clone()
            .unwrap_or_else(|| vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)])
    }

    pub fn resolved_points(&self) -> Vec<Point> {
        if let Some(p) = &self.points {
            return p.clone();
        }
        match self.scenario.as_str() {
            "cone-exit" => [0.1, 0.25, 0.4]
                .iter()
                .map(|&x| Point::from([x, 0.0]))
                .collect(),
            "counterexample-d3" => vec![Point::from([0.25, 0.0, 0.0])],
            "engine-xval" => vec![Point::from([0.25, 0.0]), Point::from([0.1, 0.2])],
            _ => families::uniform_test_points(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }
}

struct Collector {
    issues: Vec<ConfigIssue>,
}

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue::Key {
            path: path.into(),
            message: message.into(),
        });
    }

    /// Deserializes `obj[key]` when present and non-null.
    fn take<T: DeserializeOwned>(
        &mut self,
        obj: &Map<String, Value>,
        prefix: &str,
        key: &str,
    ) -> Option<T> {
        let v = obj.get(key).filter(|v| !v.is_null())?;
        match T::deserialize(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(format!("{prefix}{key}"), e.to_string());
                None
            }
        }
    }
}

fn syntax(e: serde_json::Error) -> ConfigErrors {
    ConfigErrors(vec![ConfigIssue::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }])
}

/// Parses and validates one scenario config.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let v: Value = serde_json::from_str(text).map_err(syntax)?;
    let mut c = Collector { issues: Vec::new() };
    let cfg = from_value(&v, "", &mut c);
    match cfg {
        Some(cfg) if c.issues.is_empty() => Ok(cfg),
        _ => Err(ConfigErrors(c.issues)),
    }
}

/// Parses `{"scenarios": [config, ...]}`.
pub fn parse_batch(text: &str) -> Result<Vec<ScenarioConfig>, ConfigErrors> {
    let v: Value = serde_json::from_str(text).map_err(syntax)?;
    let mut c = Collector { issues: Vec::new() };
    let mut out = Vec::new();
    match v.as_object() {
        None => c.push("$", "a batch file must be a JSON object"),
        Some(obj) => {
            for k in obj.keys().filter(|k| k.as_str() != "scenarios") {
                c.push(k.clone(), "unknown key");
            }
            match obj.get("scenarios").map(Value::as_array) {
                None => c.push("scenarios", "missing key"),
                Some(None) => c.push("scenarios", "must be an array"),
                Some(Some(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        if let Some(cfg) = from_value(item, &format!("scenarios[{i}]."), &mut c) {
                            out.push(cfg);
                        }
                    }
                }
            }
        }
    }
    if c.issues.is_empty() {
        Ok(out)
    } else {
        Err(ConfigErrors(c.issues))
    }
}

fn from_value(v: &Value, prefix: &str, c: &mut Collector) -> Option<ScenarioConfig> {
    let Some(obj) = v.as_object() else {
        c.push(format!("{prefix}$"), "a scenario config must be a JSON object");
        return None;
    };
    for k in obj.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        c.push(format!("{prefix}{k}"), "unknown key");
    }
    let name: Option<String> = c.take(obj, prefix, "scenario");
    let name = match name {
        Some(n) if lookup(&n).is_some() => n,
        Some(n) => {
            c.push(format!("{prefix}scenario"), format!("unknown scenario `{n}`"));
            n
        }
        None => {
            if !obj.contains_key("scenario") {
                c.push(format!("{prefix}scenario"), "missing key");
            }
            String::new()
        }
    };
    let mut cfg = ScenarioConfig::defaults(&name);
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(x) = c.take(obj, prefix, stringify!($field)) {
                cfg.$field = x;
            }
        )*};
    }
    macro_rules! set_opt {
        ($($field:ident),*) => {$(
            if let Some(x) = c.take(obj, prefix, stringify!($field)) {
                cfg.$field = Some(x);
            }
        )*};
    }
    set!(
        dimensions,
        engine,
        seed,
        allow_beta_above_alpha,
        paths,
        shell_eps,
        fd_cells,
        fd_tol,
        quad_tol,
        lemma24_grid,
        lemma25_grid,
        lattice,
        deltas,
        qh_spacing,
        taus,
        r,
        eps,
        good_set,
        output
    );
    set_opt!(beta, obstacles, families, points);
    validate(&cfg, prefix, c);
    Some(cfg)
}

fn positive(c: &mut Collector, path: String, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        c.push(path, format!("must be positive and finite, got {x}"));
    }
}

fn validate(cfg: &ScenarioConfig, prefix: &str, c: &mut Collector) {
    let p = |k: &str| format!("{prefix}{k}");
    let Some(info) = lookup(&cfg.scenario) else {
        return;
    };
    if !info.engines.contains(&cfg.engine) {
        c.push(
            p("engine"),
            format!(
                "scenario `{}` supports {:?}, not {:?}",
                info.name, info.engines, cfg.engine
            ),
        );
    }
    if cfg.dimensions.is_empty() {
        c.push(p("dimensions"), "must not be empty");
    }
    for (i, &d) in cfg.dimensions.iter().enumerate() {
        let allowed = match cfg.scenario.as_str() {
            "lemma-grid" | "cone-exit" => (2..=10).contains(&d),
            "counterexample-d3" => d == 3,
            _ => d == 2,
        };
        if !allowed {
            c.push(
                format!("{prefix}dimensions[{i}]"),
                format!("dimension {d} is not supported by `{}`", cfg.scenario),
            );
        }
    }
    if let Some(beta) = cfg.beta {
        if !(beta > 0.0 && beta < std::f64::consts::FRAC_PI_2) {
            c.push(p("beta"), format!("must lie in (0, pi/2), got {beta}"));
        } else if !cfg.allow_beta_above_alpha {
            for &d in &cfg.dimensions {
                if let Ok(k) = DimensionConstants::new(d) {
                    if beta > k.alpha_d {
                        c.push(
                            p("beta"),
                            format!(
                                "beta = {beta} exceeds alpha_d = {:.6} for d = {d}; \
                                 set allow_beta_above_alpha to override",
                                k.alpha_d
                            ),
                        );
                    }
                }
            }
        }
    }
    if cfg.paths == 0 || cfg.paths > 1_000_000_000 {
        c.push(p("paths"), format!("must lie in [1, 1e9], got {}", cfg.paths));
    }
    if !(cfg.shell_eps > 0.0 && cfg.shell_eps < 1e-2) {
        c.push(p("shell_eps"), format!("must lie in (0, 0.01), got {}", cfg.shell_eps));
    }
    let cells_ok = cfg.fd_cells >= 64
        && cfg.fd_cells <= crate::fdsolver::MAX_CELLS_2D
        && cfg.fd_cells % 64 == 0;
    if !cells_ok {
        c.push(
            p("fd_cells"),
            format!("must be a multiple of 64 in [64, 8192], got {}", cfg.fd_cells),
        );
    }
    for (k, x) in [("fd_tol", cfg.fd_tol), ("quad_tol", cfg.quad_tol)] {
        if !(x > 0.0 && x <= 1e-3) {
            c.push(p(k), format!("must lie in (0, 1e-3], got {x}"));
        }
    }
    for (k, n) in [("lemma24_grid", cfg.lemma24_grid), ("lemma25_grid", cfg.lemma25_grid)] {
        if !(2..=10_000_000).contains(&n) {
            c.push(p(k), format!("must lie in [2, 1e7], got {n}"));
        }
    }
    let lat = &cfg.lattice;
    if lat.sizes.is_empty() {
        c.push(p("lattice.sizes"), "must not be empty");
    }
    for (i, &n) in lat.sizes.iter().enumerate() {
        if !(4..=MAX_N).contains(&n) {
            c.push(format!("{prefix}lattice.sizes[{i}]"), format!("must lie in [4, {MAX_N}]"));
        }
    }
    if lat.walks == 0 {
        c.push(p("lattice.walks"), "must be positive");
    }
    for (i, s) in lat.starts.iter().enumerate() {
        if s.0 < 0 {
            c.push(format!("{prefix}lattice.starts[{i}]"), "start must have x1 >= 0");
        }
    }
    if lat.generators.is_empty() {
        c.push(p("lattice.generators"), "must not be empty");
    }
    for (i, &d) in cfg.deltas.iter().enumerate() {
        if !(d > 0.0 && d < 0.25) {
            c.push(format!("{prefix}deltas[{i}]"), format!("must lie in (0, 0.25), got {d}"));
        }
    }
    if cfg.scenario == "counterexample-d3" && cfg.deltas.len() < 2 {
        c.push(p("deltas"), "a slope fit needs at least two values");
    }
    if !(cfg.qh_spacing > 0.0 && cfg.qh_spacing <= 0.1) {
        c.push(p("qh_spacing"), format!("must lie in (0, 0.1], got {}", cfg.qh_spacing));
    }
    for (i, &t) in cfg.taus.iter().enumerate() {
        if !(t >= 0.0 && t.is_finite()) {
            c.push(format!("{prefix}taus[{i}]"), format!("must be non-negative, got {t}"));
        }
    }
    for (k, x) in [("r", cfg.r), ("eps", cfg.eps)] {
        if !(x > 0.0 && x < 1.0) {
            c.push(p(k), format!("must lie in (0, 1), got {x}"));
        }
    }
    let g = &cfg.good_set;
    positive(c, p("good_set.decades"), g.decades);
    positive(c, p("good_set.min_d_over_h"), g.min_d_over_h);
    positive(c, p("good_set.max_c1"), g.max_c1);
    positive(c, p("good_set.max_violation"), g.max_violation);
    if g.bins < crate::qhyp::MIN_FIT_SAMPLES {
        c.push(
            p("good_set.bins"),
            format!("must be at least {}", crate::qhyp::MIN_FIT_SAMPLES),
        );
    }

    let geo_dim = match cfg.scenario.as_str() {
        "counterexample-d3" => 3,
        _ => 2,
    };
    if let Some(obs) = &cfg.obstacles {
        if let Err(e) = Domain::new(geo_dim, obs.clone(), 1.0) {
            c.push(p("obstacles"), e.to_string());
        }
    }
    let fams = cfg.resolved_families();
    if let Some(f) = &cfg.families {
        for (i, fam) in f.iter().enumerate() {
            if fam.members.is_empty() {
                c.push(format!("{prefix}families[{i}].members"), "must not be empty");
            }
            for (j, m) in fam.members.iter().enumerate() {
                if let Err(e) = Domain::new(2, m.obstacles.clone(), 1.0) {
                    c.push(format!("{prefix}families[{i}].members[{j}]"), e.to_string());
                }
            }
        }
    }
    let points = cfg.resolved_points();
    if cfg.points.is_some() {
        validate_points(cfg, &points, &fams, geo_dim, prefix, c);
    }
}

fn validate_points(
    cfg: &ScenarioConfig,
    points: &[Point],
    fams: &[FamilySpec],
    geo_dim: usize,
    prefix: &str,
    c: &mut Collector,
) {
    let needs_half_ball = matches!(cfg.scenario.as_str(), "bhp-uniform" | "engine-xval");
    let domains: Vec<Domain> = match cfg.scenario.as_str() {
        "bhp-uniform" | "engine-xval" => fams
            .iter()
            .flat_map(|f| &f.members)
            .filter_map(|m| Domain::new(2, m.obstacles.clone(), 1.0).ok())
            .collect(),
        "cone-exit" => Domain::new(2, cfg.resolved_obstacles(), 1.0).into_iter().collect(),
        _ => Vec::new(),
    };
    for (i, pt) in points.iter().enumerate() {
        let path = format!("{prefix}points[{i}]");
        if pt.dim() != geo_dim {
            c.push(path, format!("expected dimension {geo_dim}, got {}", pt.dim()));
            continue;
        }
        if needs_half_ball && !(pt.norm() < 0.5 && pt[0] > 0.0) {
            c.push(path, "must lie in B(0, 1/2) with x1 > 0");
            continue;
        }
        if cfg.scenario == "counterexample-d3" {
            let r = pt.norm();
            if let Some(&d) = cfg.deltas.iter().find(|&&d| r <= d) {
                c.push(path, format!("must lie outside B(0, {d})"));
            } else if r >= 1.0 {
                c.push(path, "must lie inside the unit ball");
            }
            continue;
        }
        if domains.iter().any(|d| !d.contains(pt)) {
            c.push(path, "must lie inside every domain of the scenario");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(r#"{"scenario": "bhp-uniform"}"#).unwrap();
        assert_eq!(cfg.paths, 100_000);
        assert_eq!(cfg, ScenarioConfig::defaults("bhp-uniform"));
        let again = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn beta_above_alpha_needs_override() {
        let err = parse_config(r#"{"scenario": "cone-exit", "beta": 0.24}"#).unwrap_err();
        // alpha_3 ≈ 0.2255 < 0.24 < alpha_2 ≈ 0.2527
        assert_eq!(err.0.len(), 1);
        assert!(err.to_string().contains("alpha_d"), "{err}");
        let ok = parse_config(
            r#"{"scenario": "cone-exit", "beta": 0.24, "allow_beta_above_alpha": true}"#,
        );
        assert!(ok.is_ok());
        assert!(parse_config(r#"{"scenario": "cone-exit", "beta": 0.2}"#).is_ok());
    }

    #[test]
    fn all_errors_are_reported() {
        let err = parse_config(
            r#"{"scenario": "masson", "pathz": 3, "shell_eps": -1, "lattice": {"sizes": [2]}}"#,
        )
        .unwrap_err();
        let text = err.to_string();
        assert_eq!(err.0.len(), 3, "{text}");
        assert!(text.contains("pathz: unknown key"));
        assert!(text.contains("shell_eps"));
        assert!(text.contains("lattice.sizes[0]"));
    }

    #[test]
    fn type_errors_carry_key_paths() {
        let err = parse_config(
            r#"{"scenario": "cone-exit", "paths": "many", "obstacles": [{"type": "ball", "center": [0, 0]}]}"#,
        )
        .unwrap_err();
        let paths: Vec<String> = err
            .0
            .iter()
            .map(|i| match i {
                ConfigIssue::Key { path, .. } => path.clone(),
                other => panic!("{other}"),
            })
            .collect();
        assert_eq!(paths, ["paths", "obstacles"]);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_config("{\n  \"scenario\": \"masson\",\n  oops\n}").unwrap_err();
        match &err.0[0] {
            ConfigIssue::Syntax { line, column, .. } => assert_eq!((*line, *column), (3, 3)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_and_missing_scenario() {
        assert!(parse_config(r#"{"scenario": "nope"}"#)
            .unwrap_err()
            .to_string()
            .contains("unknown scenario"));
        assert!(parse_config("{}").unwrap_err().to_string().contains("missing key"));
    }

    #[test]
    fn batch_parsing() {
        assert!(parse_batch(r#"{"scenarios": []}"#).unwrap().is_empty());
        let two = parse_batch(r#"{"scenarios": [{"scenario": "masson"}, {"scenario": "lemma-grid"}]}"#)
            .unwrap();
        assert_eq!(two.len(), 2);
        let err = parse_batch(r#"{"scenarios": [{"scenario": "masson", "x": 1}], "y": 2}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenarios[0].x") && err.contains("y: unknown key"), "{err}");
    }

    #[test]
    fn points_are_checked() {
        let err = parse_config(r#"{"scenario": "bhp-uniform", "points": [[0.6, 0.0], [0.1, 0.0, 0.0]]}"#)
            .unwrap_err();
        assert_eq!(err.0.len(), 2);
        let err = parse_config(r#"{"scenario": "cone-exit", "points": [[-0.5, 0.0]]}"#).unwrap_err();
        assert!(err.to_string().contains("inside every domain"));
    }
}
