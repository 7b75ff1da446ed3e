//! Parameter sweeps, CSV tables and performance profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{preset_problem, ConstraintKind, Preset, Velocity};
use crate::newton::{newton_solve, Forcing, Method, NewtonOptions, Outcome};
use crate::spectral::{eig_table_run, SpectralCase, SpectralReport};

pub const LEVEL_NOTE: &str = "# level p: 2^(p+1)-1 interior nodes per axis, spacing (hi-lo)/2^(p+1); \
the paper's mesh label h=2^-p corresponds to level p";

/// Convection field of a sweep entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSpec {
    Constant(f64),
    Rotational,
}

impl BetaSpec {
    pub fn velocity(&self) -> Velocity {
        match self {
            BetaSpec::Constant(b) => Velocity::Constant([*b, 0.0, 0.0]),
            BetaSpec::Rotational => Velocity::Rotational,
        }
    }
}

impl fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Constant(b) => write!(f, "{b}"),
            BetaSpec::Rotational => f.write_str("rotational"),
        }
    }
}

impl FromStr for BetaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("rotational") {
            return Ok(BetaSpec::Rotational);
        }
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(BetaSpec::Constant)
            .ok_or_else(|| Error::Config(format!("invalid beta1 '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problems: Vec<Preset>,
    pub levels: Vec<usize>,
    pub nus: Vec<f64>,
    pub betas: Vec<BetaSpec>,
    /// Control weights of the mixed problem; ignored by the other presets.
    pub eps: Vec<f64>,
    pub methods: Vec<Method>,
    pub forcing: Forcing,
    pub out: PathBuf,
    /// Reserved; the solvers are deterministic.
    pub seed: u64,
    pub strict_safeguard: bool,
    pub spectral: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problems: vec![Preset::CcPb1],
            levels: vec![2],
            nus: vec![1e-2],
            betas: vec![BetaSpec::Constant(0.0)],
            eps: vec![1e-2],
            methods: vec![Method::GmresIpf],
            forcing: Forcing::Exact,
            out: PathBuf::from("results"),
            seed: 0,
            strict_safeguard: false,
            spectral: false,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("'{key}' needs at least one value")));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("invalid value '{s}' for '{key}'"))))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl ExperimentConfig {
    /// Sets one key; list values are comma-separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim().replace('-', "_").as_str() {
            "problem" | "problems" => self.problems = parse_list(key, value)?,
            "levels" | "level" | "p" => self.levels = parse_list(key, value)?,
            "nu" => self.nus = parse_list(key, value)?,
            "beta1" | "beta" => self.betas = parse_list(key, value)?,
            "eps" | "epsilon" => self.eps = parse_list(key, value)?,
            "method" | "methods" => self.methods = parse_list(key, value)?,
            "forcing" => self.forcing = value.parse()?,
            "out" => self.out = PathBuf::from(value.trim()),
            "seed" => {
                self.seed = value.trim().parse().map_err(|_| Error::Config(format!("invalid seed '{value}'")))?
            }
            "strict_safeguard" => self.strict_safeguard = parse_bool(key, value)?,
            "spectral" => self.spectral = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty()
            || self.levels.is_empty()
            || self.nus.is_empty()
            || self.betas.is_empty()
            || self.eps.is_empty()
            || self.methods.is_empty()
        {
            return Err(Error::Config("every list must be nonempty".into()));
        }
        if let Some(l) = self.levels.iter().find(|&&l| l == 0 || l > 8) {
            return Err(Error::Config(format!("level {l} out of range 1..=8")));
        }
        if let Some(nu) = self.nus.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Config(format!("nu must be positive, got {nu}")));
        }
        if let Some(e) = self.eps.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("eps must be nonnegative, got {e}")));
        }
        Ok(())
    }

    pub fn newton_options(&self, method: Method) -> NewtonOptions {
        let opts = NewtonOptions::new(method, self.forcing);
        if self.strict_safeguard {
            opts.strict()
        } else {
            opts
        }
    }

    /// `(problem, level, nu, eps, beta)` tuples in canonical order.
    pub fn cases(&self) -> Vec<(Preset, usize, f64, f64, BetaSpec)> {
        let mut out = Vec::new();
        for &preset in &self.problems {
            let eps_list: Vec<f64> = if preset.kind() == ConstraintKind::Mixed { self.eps.clone() } else { vec![0.0] };
            for &level in &self.levels {
                for &nu in &self.nus {
                    for &eps in &eps_list {
                        for &beta in &self.betas {
                            out.push((preset, level, nu, eps, beta));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub problem: String,
    pub p: usize,
    pub nu: f64,
    pub eps: f64,
    pub beta1: String,
    pub method: String,
    pub li: Option<f64>,
    pub nli: Option<usize>,
    /// Mean seconds per linear solve.
    pub cpu: Option<f64>,
    pub tcpu: Option<f64>,
    pub outcome: String,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.outcome != Outcome::Converged.to_string()
    }

    fn key(&self) -> (String, usize, OrdF64, OrdF64, String, String) {
        (self.problem.clone(), self.p, OrdF64(self.nu), OrdF64(self.eps), self.beta1.clone(), self.method.clone())
    }

    /// Key of the problem instance, without the method.
    pub fn instance(&self) -> String {
        format!("{}|{}|{:e}|{:e}|{}", self.problem, self.p, self.nu, self.eps, self.beta1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn sort_rows(rows: &mut [RunRow]) {
    rows.sort_by_key(|r| r.key());
}

/// Runs one `(case, method)` pair; solver errors become failure rows.
pub fn run_case(preset: Preset, level: usize, nu: f64, eps: f64, beta: BetaSpec, method: Method, opts: &NewtonOptions) -> RunRow {
    let mut row = RunRow {
        problem: preset.name().to_string(),
        p: level,
        nu,
        eps,
        beta1: beta.to_string(),
        method: method.name().to_string(),
        li: None,
        nli: None,
        cpu: None,
        tcpu: None,
        outcome: String::new(),
    };
    let result = preset_problem(preset.name(), level, nu, beta.velocity(), eps).and_then(|pr| newton_solve(&pr, opts));
    match result {
        Ok((_, trace)) => {
            row.outcome = trace.outcome.to_string();
            if trace.converged() {
                row.li = Some(trace.mean_li());
                row.nli = Some(trace.nli());
                row.cpu = Some(trace.seconds_per_solve());
                row.tcpu = Some(trace.total_seconds);
            }
        }
        Err(Error::Unsupported(_)) => row.outcome = "unsupported".into(),
        Err(_) => row.outcome = "error".into(),
    }
    row
}

/// One row per `(problem, p, nu, eps, beta, method)`, sorted by key.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRow>> {
    run_sweep_with(cfg, &mut |_| {})
}

/// As [`run_sweep`], calling `progress` after each run.
pub fn run_sweep_with(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&RunRow)) -> Result<Vec<RunRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (preset, level, nu, eps, beta) in cfg.cases() {
        for &method in &cfg.methods {
            let row = run_case(preset, level, nu, eps, beta, method, &cfg.newton_options(method));
            progress(&row);
            rows.push(row);
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

pub const TABLE_COLUMNS: [&str; 11] = ["problem", "p", "nu", "eps", "beta1", "method", "li", "nli", "cpu", "tcpu", "outcome"];

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn write_rows<W: Write>(out: W, rows: &[RunRow], timing: bool) -> Result<()> {
    let mut out = out;
    writeln!(out, "{LEVEL_NOTE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for r in rows {
        let (cpu, tcpu) = if timing { (opt(r.cpu), opt(r.tcpu)) } else { ("".into(), "".into()) };
        w.write_record([
            r.problem.clone(),
            r.p.to_string(),
            r.nu.to_string(),
            r.eps.to_string(),
            r.beta1.clone(),
            r.method.clone(),
            opt(r.li),
            opt(r.nli),
            cpu,
            tcpu,
            r.outcome.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the result table; failures show `-` in the numeric columns.
pub fn emit_tables(rows: &[RunRow], path: &Path) -> Result<()> {
    write_rows(BufWriter::new(File::create(path)?), rows, true)
}

/// Table text with the timing columns blanked, for reproducibility checks.
pub fn tables_without_timing(rows: &[RunRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows, false)?;
    String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
}

fn parse_opt<T: FromStr>(s: &str, col: &str) -> Result<Option<T>> {
    if s == "-" || s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Config(format!("invalid {col} '{s}'")))
}

pub fn read_tables(path: &Path) -> Result<Vec<RunRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != TABLE_COLUMNS {
        return Err(Error::Config(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("invalid {} '{}'", TABLE_COLUMNS[i], &rec[i])))
        };
        rows.push(RunRow {
            problem: rec[0].to_string(),
            p: rec[1].parse().map_err(|_| Error::Config(format!("invalid p '{}'", &rec[1])))?,
            nu: num(2)?,
            eps: num(3)?,
            beta1: rec[4].to_string(),
            method: rec[5].to_string(),
            li: parse_opt(&rec[6], "li")?,
            nli: parse_opt(&rec[7], "nli")?,
            cpu: parse_opt(&rec[8], "cpu")?,
            tcpu: parse_opt(&rec[9], "tcpu")?,
            outcome: rec[10].to_string(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    pub method: String,
    /// Breakpoints `tau >= 1`, ascending.
    pub taus: Vec<f64>,
    /// `pi(tau)` at each breakpoint.
    pub values: Vec<f64>,
}

impl ProfileCurve {
    /// Step-function value at `tau`.
    pub fn value_at(&self, tau: f64) -> f64 {
        match self.taus.iter().rposition(|&t| t <= tau) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    /// Limit for large `tau`: fraction of problems solved.
    pub fn solved_fraction(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileResult {
    pub curves: Vec<ProfileCurve>,
    /// Problems dropped because no method solved them.
    pub excluded: Vec<String>,
}

/// Profiles from a `problems x methods` table; `None` marks a failure.
pub fn performance_profile_from_times(
    methods: &[String],
    problems: &[String],
    times: &[Vec<Option<f64>>],
) -> Result<ProfileResult> {
    if methods.len() < 2 {
        return Err(Error::Config("a performance profile needs at least two methods".into()));
    }
    if times.len() != problems.len() || times.iter().any(|t| t.len() != methods.len()) {
        return Err(Error::Config("time table does not match problems x methods".into()));
    }
    let mut excluded = Vec::new();
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut kept = 0usize;
    for (name, row) in problems.iter().zip(times) {
        let best = row.iter().flatten().copied().filter(|t| t.is_finite() && *t >= 0.0).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            excluded.push(name.clone());
            continue;
        }
        kept += 1;
        for (m, t) in row.iter().enumerate() {
            if let Some(t) = t.filter(|t| t.is_finite()) {
                ratios[m].push(if best > 0.0 { t / best } else if t > 0.0 { f64::INFINITY } else { 1.0 });
            }
        }
    }
    let curves = methods
        .iter()
        .zip(ratios)
        .map(|(method, mut r)| {
            r.retain(|v| v.is_finite());
            r.sort_by(f64::total_cmp);
            let mut taus = vec![1.0];
            let mut values = vec![0.0];
            for (i, &v) in r.iter().enumerate() {
                let frac = (i + 1) as f64 / kept.max(1) as f64;
                let tau = v.max(1.0);
                if *taus.last().unwrap() == tau {
                    *values.last_mut().unwrap() = frac;
                } else {
                    taus.push(tau);
                    values.push(frac);
                }
            }
            ProfileCurve { method: method.clone(), taus, values }
        })
        .collect();
    Ok(ProfileResult { curves, excluded })
}

/// `tcpu` profiles over the instances in `rows`; failed runs count as infinite time.
pub fn performance_profile(rows: &[RunRow]) -> Result<ProfileResult> {
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut table: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for r in rows {
        let m = methods.iter().position(|x| *x == r.method).unwrap_or(0);
        let entry = table.entry(r.instance()).or_insert_with(|| vec![None; methods.len()]);
        entry[m] = if r.failed() { None } else { r.tcpu };
    }
    let problems: Vec<String> = table.keys().cloned().collect();
    let times: Vec<Vec<Option<f64>>> = table.into_values().collect();
    performance_profile_from_times(&methods, &problems, &times)
}

pub fn emit_profile(profile: &ProfileResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "tau", "pi"])?;
    for c in &profile.curves {
        for (t, v) in c.taus.iter().zip(&c.values) {
            w.write_record([c.method.clone(), t.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const SPECTRAL_COLUMNS: [&str; 12] =
    ["problem", "p", "nu", "eps", "beta1", "k", "inactive", "lam_min", "lam_max", "alpha_min", "bound_hi", "pass"];

pub fn emit_spectral(reports: &[SpectralReport], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{LEVEL_NOTE}")?;
    writeln!(out, "# k counts Newton iterations from zero; it indexes the active set A_k")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRAL_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.problem.clone(),
            r.level.to_string(),
            r.nu.to_string(),
            r.eps.to_string(),
            r.beta1.to_string(),
            r.k.to_string(),
            r.inactive.to_string(),
            format!("{:.6}", r.lam_min),
            format!("{:.6}", r.lam_max),
            format!("{:.6}", r.alpha_min),
            format!("{:.6}", r.bound_hi),
            r.pass().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Spectral reports for the configured grid; rotational fields are skipped.
pub fn run_spectral(cfg: &ExperimentConfig) -> Result<(Vec<SpectralReport>, Vec<String>)> {
    run_spectral_with(cfg, &mut |_| {})
}

pub fn run_spectral_with(
    cfg: &ExperimentConfig,
    progress: &mut dyn FnMut(&SpectralReport),
) -> Result<(Vec<SpectralReport>, Vec<String>)> {
    cfg.validate()?;
    let opts = cfg.newton_options(Method::GmresIpf);
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for (preset, level, nu, eps, beta) in cfg.cases() {
        let BetaSpec::Constant(beta1) = beta else {
            warnings.push(format!("{preset} p={level}: spectral tables use constant convection only"));
            continue;
        };
        let case = SpectralCase { preset, level, nu, eps, beta1 };
        match eig_table_run(&case, &opts) {
            Ok(r) => {
                progress(&r);
                reports.push(r);
            }
            Err(e) => warnings.push(format!("{preset} p={level} nu={nu} eps={eps} beta1={beta1}: {e}")),
        }
    }
    Ok((reports, warnings))
}
