//! Sweep output: one CSV row per grid point, a JSON manifest and an SVG
//! line plot.
//!
//! CSV columns depend on the sweep kind:
//!
//! | kind      | columns                                        |
//! |-----------|------------------------------------------------|
//! | replica   | `epsilon,m,n,trials,errors,rate,bound`         |
//! | deletion  | `epsilon,seeds,n,trials,errors,rate`           |
//! | matching  | `epsilon,m,n,seeds,trials,rows,errors,rate`    |
//! | histogram | `alphabet,m,n,trials,errors,rate`              |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{ExperimentKind, ExperimentPlan, PointResult, SweepResult};

pub const MANIFEST_SCHEMA: &str = "deanon-sweep/1";

pub fn csv_header(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Replica => &["epsilon", "m", "n", "trials", "errors", "rate", "bound"],
        ExperimentKind::Deletion => &["epsilon", "seeds", "n", "trials", "errors", "rate"],
        ExperimentKind::Matching => &[
            "epsilon", "m", "n", "seeds", "trials", "rows", "errors", "rate",
        ],
        ExperimentKind::Histogram => &["alphabet", "m", "n", "trials", "errors", "rate"],
    }
}

fn field(r: &PointResult, name: &str) -> String {
    let p = &r.point;
    match name {
        "epsilon" => p.epsilon.to_string(),
        "m" => p.m.to_string(),
        "n" => p.n.to_string(),
        "seeds" => p.seeds.to_string(),
        "alphabet" => p.alphabet.to_string(),
        "trials" => r.trials.to_string(),
        "rows" => r.rows.to_string(),
        "errors" => r.errors.to_string(),
        "rate" => r.rate.to_string(),
        "bound" => r.overlay.map(|v| v.to_string()).unwrap_or_default(),
        _ => unreachable!("unknown column {name}"),
    }
}

pub fn to_csv(result: &SweepResult) -> Result<String> {
    if result.points.is_empty() {
        return Err(Error::InvalidArgument("no results to report".into()));
    }
    let header = csv_header(result.plan.kind);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in &result.points {
        w.write_record(header.iter().map(|h| field(r, h)))
            .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// Rebuilds the results of `plan` from its CSV. Columns absent from the
/// schema are taken from the plan's grid; present ones must agree with it.
pub fn from_csv(plan: &ExperimentPlan, text: &str) -> Result<Vec<PointResult>> {
    let bad = |msg: String| Error::InvalidArgument(msg);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let expected = csv_header(plan.kind);
    if header != expected {
        return Err(bad(format!("header {header:?}, expected {expected:?}")));
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let point = *plan
            .grid
            .get(i)
            .ok_or_else(|| bad(format!("row {} has no grid point", i + 1)))?;
        let get = |name: &str| -> &str {
            let k = expected
                .iter()
                .position(|h| *h == name)
                .expect("known column");
            &record[k]
        };
        let int = |name: &str| -> Result<usize> {
            get(name)
                .parse()
                .map_err(|_| bad(format!("row {}: bad {name} {:?}", i + 1, get(name))))
        };
        let float = |name: &str| -> Result<f64> {
            get(name)
                .parse()
                .map_err(|_| bad(format!("row {}: bad {name} {:?}", i + 1, get(name))))
        };
        let trials = int("trials")?;
        let errors = int("errors")?;
        let rows = if expected.contains(&"rows") {
            int("rows")?
        } else {
            trials
        };
        let overlay = if expected.contains(&"bound") && !get("bound").is_empty() {
            Some(float("bound")?)
        } else {
            crate::experiment::overlay(plan.kind, &point)
        };
        let result = PointResult {
            point,
            trials,
            rows,
            errors,
            rate: float("rate")?,
            overlay,
        };
        for h in expected {
            if field(&result, h) != get(h) {
                return Err(bad(format!(
                    "row {}: {h} = {:?} disagrees with the plan",
                    i + 1,
                    get(h)
                )));
            }
        }
        out.push(result);
    }
    if out.len() != plan.grid.len() {
        return Err(bad(format!(
            "{} rows for {} grid points",
            out.len(),
            plan.grid.len()
        )));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema: &'static str,
    pub version: &'static str,
    pub figure: &'a str,
    pub seed: u64,
    pub plan: &'a ExperimentPlan,
    pub results: &'a [PointResult],
}

pub fn manifest(result: &SweepResult) -> Manifest<'_> {
    Manifest {
        schema: MANIFEST_SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        figure: &result.plan.figure,
        seed: result.plan.seed,
        plan: &result.plan,
        results: &result.points,
    }
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Writes `<figure>.csv`, `<figure>.json` and optionally `<figure>.svg`
/// into `dir`.
pub fn emit_report(result: &SweepResult, dir: &Path, svg: bool) -> Result<ReportPaths> {
    let csv = to_csv(result)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = &result.plan.figure;
    let write = |path: &PathBuf, text: &str| {
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    };
    let paths = ReportPaths {
        csv: dir.join(format!("{stem}.csv")),
        json: dir.join(format!("{stem}.json")),
        svg: svg.then(|| dir.join(format!("{stem}.svg"))),
    };
    write(&paths.csv, &csv)?;
    crate::io::write_json(&paths.json, &manifest(result))?;
    if let Some(path) = &paths.svg {
        write(path, &to_svg(result)?)?;
    }
    Ok(paths)
}

/// Axis variable and series key of a sweep kind.
fn axes(kind: ExperimentKind) -> (&'static str, &'static str, bool) {
    match kind {
        ExperimentKind::Replica => ("m", "epsilon", false),
        ExperimentKind::Deletion => ("seeds", "epsilon", false),
        ExperimentKind::Matching => ("m", "epsilon", false),
        ExperimentKind::Histogram => ("m", "alphabet", true),
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        Self { lo, hi, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            (0..=4)
                .map(|k| {
                    let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                    (v, format!("{v}"))
                })
                .collect()
        }
    }
}

/// Line plot of the error rate with a logarithmic y axis; histogram sweeps
/// use a logarithmic x axis as well. Zero rates are left out.
pub fn to_svg(result: &SweepResult) -> Result<String> {
    let (x_name, key_name, log_x) = axes(result.plan.kind);
    let key = |r: &PointResult| match key_name {
        "alphabet" => r.point.alphabet as f64,
        _ => r.point.epsilon,
    };
    let x_of = |r: &PointResult| match x_name {
        "seeds" => r.point.seeds as f64,
        _ => r.point.m as f64,
    };
    if result.points.is_empty() {
        return Err(Error::InvalidArgument("no results to plot".into()));
    }
    let plotted: Vec<&PointResult> = result.points.iter().filter(|r| r.rate > 0.0).collect();
    let xs = Scale::new(result.points.iter().map(x_of), log_x);
    let ys = if plotted.is_empty() {
        Scale::new([1e-3, 1.0].into_iter(), true)
    } else {
        Scale::new(plotted.iter().map(|r| r.rate), true)
    };
    let px = |v: f64| MARGIN + xs.unit(v) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - ys.unit(v) * (HEIGHT - 2.0 * MARGIN);

    let mut keys: Vec<f64> = Vec::new();
    for r in &result.points {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        result.plan.figure
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for (v, label) in xs.ticks() {
        let x = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{label}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for (v, label) in ys.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">error rate</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (c, k) in keys.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        let pts: Vec<String> = plotted
            .iter()
            .filter(|r| key(r) == *k)
            .map(|r| format!("{:.1},{:.1}", px(x_of(r)), py(r.rate)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
            for p in &pts {
                let (x, y) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
            }
        }
        let ly = MARGIN + 16.0 * c as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{key_name} = {k}</text>"#,
            WIDTH - MARGIN - 90.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
