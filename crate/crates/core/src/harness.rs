//! Run configuration, scheme drivers, CSV output and solution comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::basis::{BasisKind, MomentBasis};
use crate::closure::moments_of;
use crate::error::{Error, Result};
use crate::optimizer::{apply_vacuum_floor, solve_with_regularization, OptimizerConfig};
use crate::problems::{project_initial, Discretization, Grid, ProblemKind, ProblemSpec};
use crate::standard::{cfl_dt, StandardScheme, StandardStats};
use crate::transformed::{EntropyRecord, StepRecord, TransformedConfig, TransformedScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Standard,
    Transformed,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeKind::Standard => "standard",
            SchemeKind::Transformed => "transformed",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(SchemeKind::Standard),
            "transformed" | "new" => Ok(SchemeKind::Transformed),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected standard|transformed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub basis: BasisKind,
    pub n_x: usize,
    /// Overrides the problem's final time.
    pub tf: Option<f64>,
    pub scheme: SchemeKind,
    /// Fixed step: the standard scheme's dt, or the transformed scheme's
    /// constant step (disabling adaptivity).
    pub dt: Option<f64>,
    pub masslumping: bool,
    pub optimizer: OptimizerConfig,
    pub transformed: TransformedConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::PlaneSource,
            basis: BasisKind::HatFunction { intervals: 9 },
            n_x: 240,
            tf: None,
            scheme: SchemeKind::Transformed,
            dt: None,
            masslumping: false,
            optimizer: OptimizerConfig::default(),
            transformed: TransformedConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys use the CLI flag names;
    /// underscores and dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase();
        let k = key.as_str();
        match k {
            "problem" => self.problem = value.parse()?,
            "basis" => self.basis = value.parse()?,
            "nx" | "n-x" => self.n_x = parse(k, value)?,
            "tf" => self.tf = Some(parse(k, value)?),
            "scheme" => self.scheme = value.parse()?,
            "dt" => self.dt = Some(parse(k, value)?),
            "dt-cfl" => {
                if parse_bool(k, value)? {
                    self.dt = None;
                }
            }
            "tol" => self.transformed.tol = parse(k, value)?,
            "relaxed" => self.transformed.relaxed = parse_bool(k, value)?,
            "hessian-reg" => self.transformed.hessian_reg = parse(k, value)?,
            "hf-clip" => self.transformed.hf_clip = parse_bool(k, value)?,
            "masslumping" => self.masslumping = parse_bool(k, value)?,
            "tau" => self.optimizer.tau = parse(k, value)?,
            "max-newton-iter" => self.optimizer.max_iterations = parse(k, value)?,
            "rho-vac" => self.optimizer.rho_vac = parse(k, value)?,
            "no-cache" => self.optimizer.use_cache = !parse_bool(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "out-dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            // handled by the process, not the run
            "threads" => {
                parse::<usize>(k, value)?;
            }
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file_contents(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k, v),
                None => (line, ""),
            };
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_file_contents(&fs::read_to_string(path)?)?;
        Ok(config)
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::from_kind(self.problem);
        if let Some(tf) = self.tf {
            spec.tf = tf;
        }
        spec
    }

    pub fn build_basis(&self) -> Result<MomentBasis> {
        if self.masslumping {
            MomentBasis::masslumped(self.basis)
        } else {
            MomentBasis::new(self.basis)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let tf = self.problem_spec().tf;
        if !(tf > 0.0) || !tf.is_finite() {
            return Err(Error::Config(format!("final time must be positive, got {tf}")));
        }
        if self.n_x == 0 {
            return Err(Error::Config("--nx must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config(format!("--dt must be positive, got {dt}")));
            }
        }
        if self.masslumping && !self.basis.is_hat() {
            return Err(Error::Config(format!("--masslumping needs a hat-function basis, got {}", self.basis)));
        }
        if self.scheme == SchemeKind::Standard {
            let t = &self.transformed;
            if t.relaxed || t.hf_clip || t.hessian_reg > 0.0 {
                return Err(Error::Config(
                    "--relaxed, --hf-clip and --hessian-reg apply only to --scheme transformed".into(),
                ));
            }
        }
        Ok(())
    }

    /// `key=value` lines that reproduce this configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem={}", self.problem);
        let _ = writeln!(s, "basis={}", self.basis);
        let _ = writeln!(s, "nx={}", self.n_x);
        let _ = writeln!(s, "tf={}", self.problem_spec().tf);
        let _ = writeln!(s, "scheme={}", self.scheme);
        match self.dt {
            Some(dt) => {
                let _ = writeln!(s, "dt={dt}");
            }
            None => {
                let _ = writeln!(s, "dt-cfl=true");
            }
        }
        let t = &self.transformed;
        let _ = writeln!(s, "tol={}", t.tol);
        let _ = writeln!(s, "relaxed={}", t.relaxed);
        let _ = writeln!(s, "hessian-reg={}", t.hessian_reg);
        let _ = writeln!(s, "hf-clip={}", t.hf_clip);
        let _ = writeln!(s, "masslumping={}", self.masslumping);
        let o = &self.optimizer;
        let _ = writeln!(s, "tau={}", o.tau);
        let _ = writeln!(s, "max-newton-iter={}", o.max_iterations);
        let _ = writeln!(s, "rho-vac={}", o.rho_vac);
        let _ = writeln!(s, "no-cache={}", !o.use_cache);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: RunConfig,
    pub grid: Grid,
    pub n: usize,
    pub steps: Vec<StepRecord>,
    /// Transformed scheme only.
    pub entropy: Option<Vec<EntropyRecord>>,
    pub initial_entropy: Option<f64>,
    pub alpha: Vec<f64>,
    pub moments: Vec<f64>,
    pub wall_s: f64,
    pub standard_stats: Option<StandardStats>,
    pub relaxation_fallbacks: usize,
    pub clipped_steps: usize,
}

impl RunRecord {
    pub fn n_t(&self) -> usize {
        self.steps.len()
    }

    pub fn solution(&self) -> Solution {
        Solution {
            x: self.grid.centers(),
            dx: self.grid.dx,
            n: self.n,
            values: self.moments.clone(),
        }
    }

    /// Cumulative `Σ |Ĥ − Ĥ_est| dt` (transformed scheme).
    pub fn entropy_error(&self) -> Option<f64> {
        self.entropy.as_ref().map(|e| {
            e.iter()
                .zip(&self.steps)
                .map(|(e, s)| (e.h - e.h_est).abs() * s.dt)
                .sum()
        })
    }
}

/// Multipliers for a moment field, solved cell by cell after flooring.
pub fn initial_multipliers(basis: &MomentBasis, u: &[f64], config: &OptimizerConfig) -> Result<Vec<f64>> {
    let cells: Vec<Vec<f64>> = u
        .par_chunks(basis.n())
        .map(|c| {
            let floored = apply_vacuum_floor(basis, c, config.rho_vac);
            solve_with_regularization(basis, &floored, config, None).map(|r| r.alpha)
        })
        .collect::<Result<_>>()?;
    Ok(cells.concat())
}

pub fn moments_field(basis: &MomentBasis, alpha: &[f64]) -> Result<Vec<f64>> {
    let cells: Vec<Vec<f64>> = alpha
        .par_chunks(basis.n())
        .map(|a| moments_of(basis, a))
        .collect::<Result<_>>()?;
    Ok(cells.concat())
}

/// Executes the configured scheme. Output files are written when
/// `out_dir` is set.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let basis = config.build_basis()?;
    let spec = config.problem_spec();
    let disc = Discretization::new(&spec, &basis, config.n_x)?;
    let u0 = project_initial(&basis, &spec, config.n_x)?;
    let clock = Instant::now();
    let mut record = match config.scheme {
        SchemeKind::Standard => run_standard(config, &basis, &disc, u0)?,
        SchemeKind::Transformed => run_transformed(config, &basis, &disc, &u0)?,
    };
    record.wall_s = clock.elapsed().as_secs_f64();
    if let Some(dir) = &config.out_dir {
        write_outputs(&record, dir)?;
    }
    Ok(record)
}

fn run_standard(config: &RunConfig, basis: &MomentBasis, disc: &Discretization, mut u: Vec<f64>) -> Result<RunRecord> {
    let tf = disc.problem.tf;
    let dt = config.dt.unwrap_or_else(|| cfl_dt(disc.grid.dx, config.optimizer.epsilon_gamma));
    let mut scheme = StandardScheme::new(basis, disc, config.optimizer.clone());
    let mut steps = Vec::new();
    let mut t = 0.0;
    let eps_t = 1e-14 * tf.max(1.0);
    while tf - t > eps_t {
        let h = dt.min(tf - t);
        let clock = Instant::now();
        scheme.strang_step(&mut u, h).map_err(|e| match e {
            Error::NeedsRegularization { .. } | Error::Linear(_) | Error::Overflow { .. } | Error::NonFinite(_) => {
                Error::DtUnderflow {
                    t,
                    dt: h,
                    cell: None,
                    cause: format!("standard step failed: {e}"),
                }
            }
            other => other,
        })?;
        t = if tf - (t + h) <= eps_t { tf } else { t + h };
        steps.push(StepRecord {
            t,
            dt: h,
            wall_s: clock.elapsed().as_secs_f64(),
            err: 0.0,
            gamma: 1.0,
            retries: 0,
        });
    }
    let (alpha, _, _) = scheme.solve_cells(&mut u)?;
    Ok(RunRecord {
        config: config.clone(),
        grid: disc.grid.clone(),
        n: basis.n(),
        steps,
        entropy: None,
        initial_entropy: None,
        alpha,
        moments: u,
        wall_s: 0.0,
        standard_stats: Some(scheme.stats.clone()),
        relaxation_fallbacks: 0,
        clipped_steps: 0,
    })
}

fn run_transformed(config: &RunConfig, basis: &MomentBasis, disc: &Discretization, u0: &[f64]) -> Result<RunRecord> {
    let mut tconfig = config.transformed.clone();
    if config.dt.is_some() {
        tconfig.fixed_dt = config.dt;
    }
    let scheme = TransformedScheme::new(basis, disc, tconfig)?;
    let alpha0 = initial_multipliers(basis, u0, &config.optimizer)?;
    let out = scheme.run(&alpha0, disc.problem.tf)?;
    let moments = moments_field(basis, &out.alpha)?;
    Ok(RunRecord {
        config: config.clone(),
        grid: disc.grid.clone(),
        n: basis.n(),
        steps: out.steps,
        entropy: Some(out.entropy),
        initial_entropy: Some(out.initial_entropy),
        alpha: out.alpha,
        moments,
        wall_s: 0.0,
        standard_stats: None,
        relaxation_fallbacks: out.relaxation_fallbacks,
        clipped_steps: out.clipped_steps,
    })
}

/// A cell-centered moment field as stored in `solution.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub dx: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn n_x(&self) -> usize {
        self.x.len()
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn field_csv(x: &[f64], n: usize, values: &[f64], prefix: &str) -> String {
    let mut s = String::from("x");
    for l in 0..n {
        let _ = write!(s, ",{prefix}{l}");
    }
    s.push('\n');
    for (i, xi) in x.iter().enumerate() {
        s.push_str(&fmt_num(*xi));
        for v in &values[i * n..(i + 1) * n] {
            s.push(',');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

pub fn solution_csv(sol: &Solution) -> String {
    field_csv(&sol.x, sol.n, &sol.values, "u")
}

pub fn timesteps_csv(steps: &[StepRecord]) -> String {
    let mut s = String::from("t,dt,wall_s,err,retries\n");
    for r in steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_num(r.t),
            fmt_num(r.dt),
            fmt_num(r.wall_s),
            fmt_num(r.err),
            r.retries
        );
    }
    s
}

pub fn entropy_csv(entropy: &[EntropyRecord]) -> String {
    let mut s = String::from("t,H,H_est,gamma\n");
    for r in entropy {
        let _ = writeln!(s, "{},{},{},{}", fmt_num(r.t), fmt_num(r.h), fmt_num(r.h_est), fmt_num(r.gamma));
    }
    s
}

pub fn meta_text(record: &RunRecord) -> String {
    let mut s = record.config.echo();
    let _ = writeln!(s, "n={}", record.n);
    let _ = writeln!(s, "dx={}", fmt_num(record.grid.dx));
    let _ = writeln!(s, "n_t={}", record.n_t());
    let _ = writeln!(s, "wall_s={}", fmt_num(record.wall_s));
    let retries: usize = record.steps.iter().map(|s| s.retries).sum();
    let _ = writeln!(s, "retries={retries}");
    if let Some(stats) = &record.standard_stats {
        let _ = writeln!(s, "cfl_dt={}", fmt_num(cfl_dt(record.grid.dx, record.config.optimizer.epsilon_gamma)));
        let _ = writeln!(s, "min_component={}", fmt_num(stats.min_component));
        let _ = writeln!(s, "regularizations={}", stats.regularizations);
        let _ = writeln!(s, "vacuum_floors={}", stats.vacuum_floors);
        let _ = writeln!(s, "newton_iterations={}", stats.newton_iterations);
        let _ = writeln!(s, "solves={}", stats.solves);
    }
    if let Some(err) = record.entropy_error() {
        let _ = writeln!(s, "entropy_error={}", fmt_num(err));
        let _ = writeln!(s, "relaxation_fallbacks={}", record.relaxation_fallbacks);
        let _ = writeln!(s, "clipped_steps={}", record.clipped_steps);
    }
    s
}

pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("solution.csv"), solution_csv(&record.solution()))?;
    fs::write(
        dir.join("alpha.csv"),
        field_csv(&record.grid.centers(), record.n, &record.alpha, "a"),
    )?;
    fs::write(dir.join("timesteps.csv"), timesteps_csv(&record.steps))?;
    if let Some(entropy) = &record.entropy {
        fs::write(dir.join("entropy.csv"), entropy_csv(entropy))?;
    }
    fs::write(dir.join("meta.txt"), meta_text(record))?;
    Ok(())
}

pub fn parse_solution(text: &str) -> Result<Solution> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty solution file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"x") || cols.len() < 2 {
        return Err(Error::Parse(format!("unexpected solution header '{header}'")));
    }
    let n = cols.len() - 1;
    let mut x = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} columns, expected {}",
                row + 1,
                fields.len(),
                n + 1
            )));
        }
        let mut nums = fields.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: bad number '{f}'", row + 1)))
        });
        x.push(nums.next().unwrap()?);
        for v in nums {
            values.push(v?);
        }
    }
    if x.len() < 2 {
        return Err(Error::Parse("need at least two cells to infer the cell width".into()));
    }
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    Ok(Solution { x, dx, n, values })
}

pub fn read_solution(path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_solution(&text)
}

/// `(Σ_i Δx Σ_ℓ |a − b|, max |a − b|)`.
pub fn compare(a: &Solution, b: &Solution) -> Result<(f64, f64)> {
    if a.n != b.n || a.n_x() != b.n_x() || a.values.len() != b.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cells × {} moments vs {} cells × {} moments",
            a.n_x(),
            a.n,
            b.n_x(),
            b.n
        )));
    }
    if (a.dx - b.dx).abs() > 1e-9 * a.dx.abs().max(b.dx.abs()) {
        return Err(Error::ShapeMismatch(format!("cell widths differ: {} vs {}", a.dx, b.dx)));
    }
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        l1 += d;
        linf = linf.max(d);
    }
    Ok((a.dx * l1, linf))
}

/// L1 distance between two moment fields on the same grid.
pub fn l1_distance(dx: f64, a: &[f64], b: &[f64]) -> f64 {
    dx * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
