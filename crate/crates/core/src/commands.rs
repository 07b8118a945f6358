//! Batch commands behind the command-line front end.
//!
//! Each command instantiates a scenario, runs one part of the pipeline,
//! writes CSV and JSON files into an output directory and returns a summary
//! whose `passed` flag decides the exit code.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::auxiliary::{
    closed_form_for, linearized_evidence, AuxError, LevelSearch, StabilityVerdict,
};
use crate::comparison::{verify_domination, ComparisonError, OrderingReport, Outcome, Slack};
use crate::dde::{self, DdeError, DelaySystem};
use crate::region::{
    embedded_disk_radius, estimate_boundary_polar, radius_in_region, BlowUpDetector,
    RegionBoundary, RegionError, SearchConfig,
};
use crate::scenarios::{Scenario, ScenarioError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Slack multiplier on the summed solver tolerances.
pub const SLACK_FACTOR: f64 = 2.0;

#[derive(Error, Debug)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid option: {0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Integration(#[from] DdeError),
    #[error(transparent)]
    Auxiliary(#[from] AuxError),
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_)
            | CommandError::Scenario(
                ScenarioError::Io(_)
                | ScenarioError::Parse(_)
                | ScenarioError::Serialize(_)
                | ScenarioError::InvalidParameters(_),
            ) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

/// Command-line overrides of the scenario numerics.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Relative solver tolerance; the absolute tolerance becomes `tol * 1e-3`.
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
    pub angle_step: Option<f64>,
    pub seed_radius: Option<f64>,
    pub t_end: Option<f64>,
}

impl Overrides {
    /// Scenario with the overrides applied.
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(CommandError::Usage(format!(
                "--{name} must be positive, got {x}"
            ))),
            _ => Ok(v),
        };
        let mut s = scenario.clone();
        if let Some(tol) = positive("tol", self.tol)? {
            s.numerics.rtol = tol;
            s.numerics.atol = tol * 1e-3;
        }
        if let Some(h) = positive("horizon", self.horizon)? {
            s.numerics.horizon = h;
        }
        if let Some(a) = positive("angle-step", self.angle_step)? {
            s.numerics.angle_step = a;
        }
        if let Some(r) = positive("seed-radius", self.seed_radius)? {
            s.numerics.seed_radius = r;
        }
        if let Some(t) = positive("t-end", self.t_end)? {
            s.t_end = t;
        }
        Ok(s)
    }
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| CommandError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Shortest decimal that parses back to the same float.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn scenario_name(s: &Scenario) -> String {
    s.name.clone().unwrap_or_else(|| "unnamed".to_string())
}

// ============================================================================
// dominate
// ============================================================================

#[derive(Debug, Clone, Serialize)]
pub struct DominateSummary {
    pub scenario: String,
    pub t_end: f64,
    pub passed: bool,
    pub outcome: Outcome,
    /// `max (x_norm - y)` and `max (y - y_hat)` over the grid.
    pub pair_violation: Vec<f64>,
    pub max_violation: f64,
    pub first_failure: Option<f64>,
    pub slack: Slack,
    pub grid_points: usize,
    pub swapped: bool,
    pub files: Vec<PathBuf>,
}

/// Integrates the vector system, its auxiliary equation and the majorant on
/// `[0, t_end]` and checks `|x| <= y <= y_hat`. With `swap` the `x_norm` and
/// `y_hat` columns trade places, which must fail.
pub fn run_dominate(
    scenario: &Scenario,
    overrides: &Overrides,
    swap: bool,
    out: &Path,
) -> Result<DominateSummary> {
    let s = overrides.apply(scenario)?;
    let inst = s.instantiate(s.t_end)?;
    let tol = s.numerics.tolerance();
    let x = dde::integrate(&inst.vector, s.t_end, &tol)?;
    let y = inst.auxiliary.solve(s.t_end, &tol)?;
    let y_hat = inst.majorant.solve(s.t_end, &tol)?;
    let slack = Slack::from_tolerances(SLACK_FACTOR, &tol, &tol);
    let mut report = verify_domination(&x, &[&y, &y_hat], s.numerics.grid_points, slack)?;
    if swap {
        let mut series = report.series;
        series.swap(0, 2);
        report = OrderingReport::from_series(report.grid, series, slack);
    }

    create_dir(out)?;
    let csv_path = out.join("domination.csv");
    let rows = report.grid.iter().enumerate().map(|(j, &t)| {
        vec![
            num(t),
            num(report.series[0][j]),
            num(report.series[1][j]),
            num(report.series[2][j]),
        ]
    });
    write_csv(&csv_path, &["t", "x_norm", "y", "y_hat"], rows)?;

    let json_path = out.join("report.json");
    let summary = DominateSummary {
        scenario: scenario_name(&s),
        t_end: s.t_end,
        passed: report.passed(),
        outcome: report.outcome,
        pair_violation: report.pair_violation.clone(),
        max_violation: report.max_violation,
        first_failure: report.first_failure,
        slack,
        grid_points: report.grid.len(),
        swapped: swap,
        files: vec![csv_path, json_path.clone()],
    };
    write_json(&json_path, &summary)?;
    Ok(summary)
}

// ============================================================================
// region
// ============================================================================

#[derive(Debug, Clone, Serialize)]
pub struct DiskSummary {
    pub source: String,
    /// Zero when the seed radius already blows up.
    pub radius: f64,
    pub capped: bool,
    pub seed_blows_up: bool,
    pub inside_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub scenario: String,
    pub passed: bool,
    pub horizon: f64,
    pub angle_step: f64,
    pub rays: usize,
    pub search_tol: f64,
    pub seed_radius: f64,
    pub radius_cap: f64,
    pub detector: BlowUpDetector,
    pub min_boundary_radius: f64,
    pub capped_rays: usize,
    pub disks: Vec<DiskSummary>,
    /// The auxiliary disk is at least the majorant disk.
    pub disks_ordered: bool,
    pub files: Vec<PathBuf>,
}

pub fn search_config(s: &Scenario) -> SearchConfig {
    SearchConfig {
        horizon: s.numerics.horizon,
        search_tol: s.numerics.search_tol,
        seed: s.numerics.seed_radius,
        cap: s.numerics.radius_cap,
        detector: s.numerics.detector(),
        tol: s.numerics.tolerance(),
    }
}

/// Polar boundary of the vector system and the disks certified by the
/// auxiliary equation and the majorant. Passes when both disks fit inside
/// the boundary.
pub fn run_region(scenario: &Scenario, overrides: &Overrides, out: &Path) -> Result<RegionSummary> {
    let s = overrides.apply(scenario)?;
    let cfg = search_config(&s);
    let inst = s.instantiate(cfg.horizon)?;
    if inst.vector.dim() != 2 {
        return Err(CommandError::Usage(format!(
            "region maps need a 2-dimensional scenario, got dimension {}",
            inst.vector.dim()
        )));
    }
    let boundary = estimate_boundary_polar(&inst.vector, s.numerics.angle_step, &cfg)?;

    let mut disks = Vec::new();
    for (source, sys) in [("auxiliary", &inst.auxiliary), ("majorant", &inst.majorant)] {
        let (radius, capped, seed_blows_up) = match embedded_disk_radius(sys, &cfg) {
            Ok(d) => (d.radius.radius, d.radius.capped, false),
            Err(RegionError::SeedBlowsUp { .. }) => (0.0, false, true),
            Err(e) => return Err(e.into()),
        };
        disks.push(DiskSummary {
            source: source.to_string(),
            radius,
            capped,
            seed_blows_up,
            inside_boundary: radius_in_region(&boundary, radius),
        });
    }

    create_dir(out)?;
    let boundary_path = out.join("boundary.csv");
    write_boundary_csv(&boundary_path, &boundary)?;
    let disks_path = out.join("disks.csv");
    write_csv(
        &disks_path,
        &["source", "radius"],
        disks.iter().map(|d| vec![d.source.clone(), num(d.radius)]),
    )?;

    let json_path = out.join("region.json");
    let summary = RegionSummary {
        scenario: scenario_name(&s),
        passed: disks.iter().all(|d| d.inside_boundary),
        horizon: cfg.horizon,
        angle_step: s.numerics.angle_step,
        rays: boundary.angles.len(),
        search_tol: cfg.search_tol,
        seed_radius: cfg.seed,
        radius_cap: cfg.cap,
        detector: cfg.detector,
        min_boundary_radius: boundary.min_radius(),
        capped_rays: boundary.radii.iter().filter(|r| r.capped).count(),
        disks_ordered: disks[0].radius >= disks[1].radius,
        disks,
        files: vec![boundary_path, disks_path, json_path.clone()],
    };
    write_json(&json_path, &summary)?;
    Ok(summary)
}

fn write_boundary_csv(path: &Path, b: &RegionBoundary) -> Result<()> {
    let rows = b.angles.iter().zip(&b.radii).map(|(&theta, r)| {
        let flag = if r.capped { "capped" } else { "bracketed" };
        vec![
            num(theta),
            num(r.radius),
            num(r.radius.ln()),
            flag.to_string(),
        ]
    });
    write_csv(path, &["theta", "radius", "log_radius", "flag"], rows)
}

// ============================================================================
// certify
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyMethod {
    ClosedForm,
    Linearized,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifySummary {
    pub scenario: String,
    pub passed: bool,
    pub method: CertifyMethod,
    /// The closed-form verdict concerns the unforced equation.
    pub forcing_amplitude: f64,
    pub verdict: StabilityVerdict,
    /// The closed-form attempt when the linearized search was used instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_attempt: Option<StabilityVerdict>,
    pub files: Vec<PathBuf>,
}

/// Closed-form criterion on the majorant, falling back to finite-horizon
/// evidence from the linearized auxiliary equation.
pub fn run_certify(
    scenario: &Scenario,
    overrides: &Overrides,
    out: Option<&Path>,
) -> Result<CertifySummary> {
    let s = overrides.apply(scenario)?;
    let inst = s.instantiate(s.numerics.horizon)?;
    let closed = closed_form_for(&inst.majorant)?;
    let (method, verdict, attempt) = if closed.is_conclusive() {
        (CertifyMethod::ClosedForm, closed, None)
    } else {
        let search = LevelSearch {
            horizon: s.numerics.horizon,
            rel_tol: s.numerics.search_tol,
            tol: s.numerics.tolerance(),
        };
        (
            CertifyMethod::Linearized,
            linearized_evidence(&inst.auxiliary, &search)?,
            Some(closed),
        )
    };
    let mut summary = CertifySummary {
        scenario: scenario_name(&s),
        passed: verdict.is_conclusive(),
        method,
        forcing_amplitude: inst.auxiliary.forcing_amplitude(),
        verdict,
        closed_form_attempt: attempt,
        files: Vec::new(),
    };
    if let Some(out) = out {
        create_dir(out)?;
        let path = out.join("certify.json");
        summary.files.push(path.clone());
        write_json(&path, &summary)?;
    }
    Ok(summary)
}
