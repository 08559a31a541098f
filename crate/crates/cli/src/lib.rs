//! Experiment driver: runs registry cases over refinement levels and writes
//! convergence tables (CSV) and solution fields (legacy VTK).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dgiga_core::analysis::{error_norms, fill_rates, reference_rate_table, solve_level};
use dgiga_core::problems::{get_case_with, CASE_NAMES};
use dgiga_core::{CaseParams, CgOptions, ConvergenceRecord, Discretization, FieldSpace, MultiPatchDomain, ProblemSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown case `{0}` (see `dgiga list`)")]
    UnknownCase(String),
    #[error("config: {0}")]
    Config(String),
    #[error("solver failed: {0}")]
    Solve(dgiga_core::Error),
    #[error(transparent)]
    Core(dgiga_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// Process exit code: 2 for bad input, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownCase(_) | CliError::Config(_) => 2,
            CliError::Solve(_) => 3,
            CliError::Core(dgiga_core::Error::Config(_)) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<dgiga_core::Error> for CliError {
    fn from(e: dgiga_core::Error) -> Self {
        match e {
            dgiga_core::Error::UnknownName(n) => CliError::UnknownCase(n),
            dgiga_core::Error::Solve(_) => CliError::Solve(e),
            e => CliError::Core(e),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Everything one `run` needs. Defaults < config file < command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub degree: usize,
    pub levels: usize,
    pub ratio: Option<usize>,
    pub lambda: Option<f64>,
    pub grading: Option<f64>,
    pub penalty: Option<f64>,
    pub quad: Option<usize>,
    pub tol: f64,
    pub out: PathBuf,
    pub nitsche: bool,
    pub vtk: bool,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: "smooth2d".into(),
            degree: 2,
            levels: 4,
            ratio: None,
            lambda: None,
            grading: None,
            penalty: None,
            quad: None,
            tol: CgOptions::default().tol,
            out: PathBuf::from("out"),
            nitsche: true,
            vtk: false,
            threads: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "case" => self.case = value.to_string(),
            "degree" => self.degree = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "ratio" => self.ratio = Some(parse(key, value)?),
            "lambda" => self.lambda = Some(parse(key, value)?),
            "grading" => self.grading = Some(parse(key, value)?),
            "penalty" => self.penalty = Some(parse(key, value)?),
            "quad" => self.quad = Some(parse(key, value)?),
            "tol" => self.tol = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "nitsche" => self.nitsche = parse_bool(key, value)?,
            "vtk" => self.vtk = parse_bool(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(CliError::Config("levels must be at least 1".into()));
        }
        if self.degree < 1 {
            return Err(CliError::Config("degree must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::Config(format!("tol {} not in (0, 1)", self.tol)));
        }
        Ok(())
    }

    fn params(&self) -> CaseParams {
        CaseParams {
            ratio: self.ratio,
            lambda: self.lambda,
            grading: self.grading,
        }
    }

    fn cg(&self) -> CgOptions {
        CgOptions {
            tol: self.tol,
            ..Default::default()
        }
    }

    /// Output file stem, e.g. `two_patch_sine_k2`.
    pub fn stem(&self) -> String {
        format!("{}_k{}", self.case, self.degree)
    }
}

/// `x` with four significant digits in fixed notation.
pub fn fmt_sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const CSV_HEADER: &str = "level,dofs,l2_error,l2_rate,dg_error,dg_rate";

/// Convergence table as CSV; rates that do not exist are left empty.
pub fn to_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let rate = |r: Option<f64>| r.map(fmt_sig4).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{:.3e},{},{:.3e},{}",
            r.level,
            r.dofs,
            r.l2_error,
            rate(r.l2_rate),
            r.dg_error,
            rate(r.dg_rate)
        );
    }
    s
}

/// Spec and level-0 discretization of `cfg`, with its overrides applied.
pub fn setup(cfg: &RunConfig) -> Result<(dgiga_core::ProblemCase, ProblemSpec, Discretization)> {
    if !CASE_NAMES.contains(&cfg.case.as_str()) {
        return Err(CliError::UnknownCase(cfg.case.clone()));
    }
    let case = get_case_with(&cfg.case, &cfg.params())?;
    let mut spec = case.spec()?;
    spec.penalty = cfg.penalty;
    spec.nitsche_rhs_consistency = cfg.nitsche;
    let mut disc = case.discretization(cfg.degree, 0);
    disc.quad_points = cfg.quad;
    Ok((case, spec, disc))
}

/// Solves every level of `cfg` and returns the table; with `vtk` set the
/// finest solution is also written next to the CSV.
pub fn run_levels(cfg: &RunConfig) -> Result<Vec<ConvergenceRecord>> {
    cfg.validate()?;
    let (case, spec, disc) = setup(cfg)?;
    let opts = cfg.cg();
    if let Some(gap) = case.reference_gap {
        let records = reference_rate_table(&spec, &disc, cfg.levels, gap, &opts)?;
        if cfg.vtk {
            let d = Discretization { level: cfg.levels - 1, ..disc };
            let (sys, u, _) = solve_level(&spec, &d, &opts)?;
            write_vtk(&spec.domain, &sys.space, &u, &cfg.out.join(cfg.stem()), 0)?;
        }
        return Ok(records);
    }
    let mut records = Vec::with_capacity(cfg.levels);
    for level in 0..cfg.levels {
        let d = Discretization { level, ..disc.clone() };
        let (sys, u, _) = solve_level(&spec, &d, &opts)?;
        let e = error_norms(&spec, &sys, &u, None)?;
        records.push(ConvergenceRecord {
            level,
            dofs: sys.num_dofs(),
            l2_error: e.l2,
            dg_error: e.dg,
            l2_rate: None,
            dg_rate: None,
        });
        if cfg.vtk && level + 1 == cfg.levels {
            write_vtk(&spec.domain, &sys.space, &u, &cfg.out.join(cfg.stem()), 0)?;
        }
    }
    fill_rates(&mut records);
    Ok(records)
}

/// `run`: writes `<out>/<case>_k<k>.csv` and returns the table.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<ConvergenceRecord>> {
    let records = run_levels(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join(format!("{}.csv", cfg.stem()));
    fs::write(&path, to_csv(&records)).map_err(io_err(&path))?;
    Ok(records)
}

/// `sweep`: one `run` per degree; returns `(degree, table)` pairs.
pub fn cmd_sweep(cfg: &RunConfig, degrees: &[usize]) -> Result<Vec<(usize, Vec<ConvergenceRecord>)>> {
    degrees
        .iter()
        .map(|&k| {
            let c = RunConfig { degree: k, ..cfg.clone() };
            Ok((k, cmd_run(&c)?))
        })
        .collect()
}

/// One line per registry case: name, geometry, expected `(L2, dG)` rates for
/// k = 1, 2, 3 (L2 blank where unknown), description.
pub fn cmd_list() -> Result<Vec<String>> {
    let mut out = Vec::new();
    for name in CASE_NAMES {
        let case = get_case_with(name, &CaseParams::default())?;
        let mut rates = Vec::new();
        for k in 1..=3 {
            let (l2, dg) = case.expected_rates(k)?;
            rates.push(format!("k={k}:{}/{}", l2.map(fmt_sig4).unwrap_or_default(), fmt_sig4(dg)));
        }
        out.push(format!("{:<20} {:<20} {}  {}", name, case.geometry, rates.join(" "), case.description));
    }
    Ok(out)
}

/// Writes one legacy ASCII VTK structured grid per patch,
/// `<base>_p<i>.vtk`, sampling the field `coeffs` at `divisions + 1` points
/// per parametric direction (0 picks twice the element count per direction).
pub fn write_vtk(
    domain: &MultiPatchDomain,
    space: &FieldSpace,
    coeffs: &[f64],
    base: &Path,
    divisions: usize,
) -> Result<Vec<PathBuf>> {
    if let Some(dir) = base.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut files = Vec::new();
    for (p, patch) in domain.patches.iter().enumerate() {
        let d = patch.par_dim();
        let counts = space.meshes[p].counts();
        let mut dims = [1usize; 3];
        for a in 0..d {
            dims[a] = if divisions > 0 { divisions } else { 2 * counts[a] } + 1;
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut pts = String::with_capacity(n * 48);
        let mut vals = String::with_capacity(n * 16);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = [i, j, k];
                    let xhat: Vec<f64> = (0..d).map(|a| idx[a] as f64 / (dims[a] - 1) as f64).collect();
                    let (x, _) = patch.map_point(&xhat)?;
                    let (u, _) = space.eval(p, &xhat, coeffs)?;
                    let _ = writeln!(pts, "{:.9e} {:.9e} {:.9e}", x[0], x[1], x[2]);
                    let _ = writeln!(vals, "{u:.9e}");
                }
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "dG IgA field u, patch {p}");
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET STRUCTURED_GRID");
        let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
        let _ = writeln!(s, "POINTS {n} double");
        s.push_str(&pts);
        let _ = writeln!(s, "POINT_DATA {n}");
        let _ = writeln!(s, "SCALARS u double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        s.push_str(&vals);
        let name = format!("{}_p{p}.vtk", base.file_name().and_then(|f| f.to_str()).unwrap_or("field"));
        let path = base.with_file_name(name);
        fs::write(&path, s).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(files)
}
