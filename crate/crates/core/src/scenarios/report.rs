//! Report rows and their bit-stable CSV/JSON encodings.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// How a measured value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `measured ≥ threshold − tolerance`
    AtLeast,
    /// `measured ≤ threshold + tolerance`
    AtMost,
    /// `measured > threshold`
    Above,
    /// `measured < threshold`
    Below,
    /// `|measured − threshold| ≤ tolerance`
    Within,
    /// Reported for context; never fails.
    Info,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::AtLeast => "at_least",
            Relation::AtMost => "at_most",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Within => "within",
            Relation::Info => "info",
        }
    }

    /// The pass rule. Any NaN operand fails a non-informational row.
    pub fn holds(self, measured: f64, threshold: f64, tolerance: f64) -> bool {
        match self {
            Relation::AtLeast => measured >= threshold - tolerance,
            Relation::AtMost => measured <= threshold + tolerance,
            Relation::Above => measured > threshold,
            Relation::Below => measured < threshold,
            Relation::Within => (measured - threshold).abs() <= tolerance,
            Relation::Info => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    /// Tag from [`super::CLAIMS`].
    pub claim: &'static str,
    /// What was measured: obstacle id, point, dimension and so on.
    pub label: String,
    pub measured: f64,
    pub uncertainty: f64,
    pub threshold: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
    /// Wall-clock seconds spent on the row's computation. Kept out of the
    /// report files so that reruns are byte-identical.
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ReportRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &str,
        claim: &'static str,
        label: impl Into<String>,
        measured: f64,
        uncertainty: f64,
        threshold: f64,
        tolerance: f64,
        relation: Relation,
    ) -> Self {
        Self {
            scenario: scenario.to_string(),
            claim,
            label: label.into(),
            measured,
            uncertainty,
            threshold,
            tolerance,
            relation,
            pass: relation.holds(measured, threshold, tolerance),
            runtime_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

/// A supplementary file produced by a scenario (per-point tables and the like).
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

pub const CSV_HEADER: &str =
    "scenario,claim,label,measured,uncertainty,threshold,tolerance,relation,pass";

/// 17 significant digits; non-finite values become `nan`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn json_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.scenario),
            r.claim,
            csv_field(&r.label),
            fmt_f64(r.measured),
            fmt_f64(r.uncertainty),
            fmt_f64(r.threshold),
            fmt_f64(r.tolerance),
            r.relation.as_str(),
            r.pass
        );
    }
    out
}

pub fn to_json(rows: &[ReportRow]) -> String {
    let s = |v: &str| serde_json::to_string(v).expect("strings always serialize");
    let mut out = String::from("[");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(
            out,
            "  {{\"scenario\": {}, \"claim\": {}, \"label\": {}, \"measured\": {}, \
             \"uncertainty\": {}, \"threshold\": {}, \"tolerance\": {}, \"relation\": {}, \
             \"pass\": {}}}",
            s(&r.scenario),
            s(r.claim),
            s(&r.label),
            json_f64(r.measured),
            json_f64(r.uncertainty),
            json_f64(r.threshold),
            json_f64(r.tolerance),
            s(r.relation.as_str()),
            r.pass
        );
    }
    out.push_str(if rows.is_empty() { "]\n" } else { "\n]\n" });
    out
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes `<stem>.<csv|json>` and every artifact into `dir`; returns the
/// paths written.
pub fn write_report(
    rows: &[ReportRow],
    artifacts: &[Artifact],
    dir: &Path,
    stem: &str,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    let main = dir.join(format!("{stem}.{}", format.extension()));
    let body = match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    };
    write_atomic(&main, &body)?;
    let mut written = vec![main];
    for a in artifacts {
        let p = dir.join(&a.file_name);
        write_atomic(&p, &a.contents)?;
        written.push(p);
    }
    Ok(written)
}
