//! Config-driven studies: uniform convergence, adaptive runs, the inf-sup table, rate fits
//! and their CSV outputs.
//!
//! Convergence CSV columns: `step,elements,dofs,eta,rel_error,marked`. Inf-sup CSV columns:
//! `formulation,level,regime,trial_dofs,test_dofs,gamma_h`. Reals are written with 17
//! significant digits; a Galerkin run has no residual and writes `NaN` for `eta`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exact::{singular_solution, smooth_solution_2d, ExactSolution};
use crate::forms::Formulation;
use crate::infsup::discrete_infsup;
use crate::material::MaterialParams;
use crate::mesh::{build_lshape_mesh_with, build_square_mesh, BoundaryTag, Mesh};
use crate::persist::{format_real, save_solution, StudyManifest};
use crate::residual::{adaptive_loop, element_residuals};
use crate::solver::{solve_method, Method, SolutionFields};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    SmoothSquare,
    LshapeSingular,
}

impl Benchmark {
    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::SmoothSquare => "smooth_square",
            Benchmark::LshapeSingular => "lshape_singular",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "smooth_square" => Some(Benchmark::SmoothSquare),
            "lshape_singular" => Some(Benchmark::LshapeSingular),
            _ => None,
        }
    }

    pub fn default_material(&self) -> MaterialParams {
        match self {
            Benchmark::SmoothSquare => MaterialParams::unit(),
            Benchmark::LshapeSingular => MaterialParams::steel(),
        }
    }

    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        match self {
            Benchmark::SmoothSquare => build_square_mesh(n),
            Benchmark::LshapeSingular => build_lshape_mesh_with(n),
        }
    }

    pub fn exact(&self, material: MaterialParams) -> Result<ExactSolution> {
        match self {
            Benchmark::SmoothSquare => Ok(smooth_solution_2d(material)),
            Benchmark::LshapeSingular => singular_solution(material),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Uniform,
    Adaptive,
}

impl Refinement {
    pub fn name(&self) -> &'static str {
        match self {
            Refinement::Uniform => "uniform",
            Refinement::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub method: Method,
    pub p: usize,
    pub dp: usize,
    pub p_res: usize,
    pub refinement: Refinement,
    /// Number of refinements; a run solves on `steps + 1` meshes.
    pub steps: usize,
    /// Subdivisions of the initial mesh.
    pub n0: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Rows used by the rate fit; `max(2, steps − 2)` when absent.
    pub rate_window: Option<usize>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = Benchmark::SmoothSquare.default_material();
        Self {
            benchmark: Benchmark::SmoothSquare,
            method: Method::Dpg(Formulation::Primal),
            p: 1,
            dp: 1,
            p_res: 4,
            refinement: Refinement::Uniform,
            steps: 4,
            n0: 2,
            lambda: m.lambda(),
            mu: m.mu(),
            rate_window: None,
            output: None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] =
    ["benchmark", "formulation", "p", "dp", "p_res", "refinement", "steps", "n0", "lambda", "mu", "rate_window", "output"];

impl RunConfig {
    /// Applies one `key = value` setting; `line` is reported in errors.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |message: String| Error::Config { line, message };
        fn num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
            v.parse().map_err(|_| Error::Config { line, message: format!("`{key}` cannot be `{v}`") })
        }
        match key {
            "benchmark" => {
                self.benchmark = Benchmark::from_name(value).ok_or_else(|| bad(format!("unknown benchmark `{value}`")))?;
                let m = self.benchmark.default_material();
                self.lambda = m.lambda();
                self.mu = m.mu();
            }
            "formulation" => {
                self.method = Method::from_name(value).ok_or_else(|| bad(format!("unknown formulation `{value}`")))?
            }
            "p" => self.p = num(key, value, line)?,
            "dp" => self.dp = num(key, value, line)?,
            "p_res" => self.p_res = num(key, value, line)?,
            "refinement" => {
                self.refinement = match value {
                    "uniform" => Refinement::Uniform,
                    "adaptive" => Refinement::Adaptive,
                    _ => return Err(bad(format!("unknown refinement `{value}`"))),
                }
            }
            "steps" => self.steps = num(key, value, line)?,
            "n0" => self.n0 = num(key, value, line)?,
            "lambda" => self.lambda = num(key, value, line)?,
            "mu" => self.mu = num(key, value, line)?,
            "rate_window" => self.rate_window = Some(num(key, value, line)?),
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A `benchmark` line resets the
    /// material to that benchmark's defaults, so it must precede `lambda` and `mu`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, message: format!("expected `key = value`, found `{line}`") })?;
            c.set(k.trim(), v.trim(), i + 1)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.p < 1 {
            return bad("p must be at least 1");
        }
        if self.p_res < self.p + 1 {
            return bad("p_res must be at least p + 1");
        }
        if self.steps < 1 {
            return bad("steps must be at least 1");
        }
        if self.n0 < 1 {
            return bad("n0 must be at least 1");
        }
        if self.rate_window.is_some_and(|k| k < 2) {
            return bad("rate_window must be at least 2");
        }
        self.material().map(|_| ())
    }

    pub fn material(&self) -> Result<MaterialParams> {
        MaterialParams::new(self.lambda, self.mu)
    }

    /// Canonical `key = value` text; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "benchmark = {}", self.benchmark.name());
        let _ = writeln!(out, "formulation = {}", self.method.name());
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "dp = {}", self.dp);
        let _ = writeln!(out, "p_res = {}", self.p_res);
        let _ = writeln!(out, "refinement = {}", self.refinement.name());
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "n0 = {}", self.n0);
        let _ = writeln!(out, "lambda = {:?}", self.lambda);
        let _ = writeln!(out, "mu = {:?}", self.mu);
        if let Some(k) = self.rate_window {
            let _ = writeln!(out, "rate_window = {k}");
        }
        if let Some(o) = &self.output {
            let _ = writeln!(out, "output = {}", o.display());
        }
        out
    }

    pub fn rate_window(&self) -> usize {
        self.rate_window.unwrap_or(2.max(self.steps.saturating_sub(2)))
    }

    fn stem(&self) -> String {
        format!("{}_{}_p{}_{}", self.benchmark.name(), self.method.name(), self.p, self.refinement.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub step: usize,
    pub elements: usize,
    pub dofs: usize,
    /// Total residual; NaN for methods without one.
    pub eta: f64,
    pub rel_error: f64,
    pub marked: usize,
    /// Seconds spent on the step; not written to CSV.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<ConvergenceRow>,
    pub error_slope: f64,
    /// NaN for methods without a residual.
    pub eta_slope: f64,
}

pub const CONVERGENCE_HEADER: &str = "step,elements,dofs,eta,rel_error,marked";
pub const INFSUP_HEADER: &str = "formulation,level,regime,trial_dofs,test_dofs,gamma_h";

/// Least-squares slope of `log10(y)` against `log10(dofs)` over the last `k` points.
pub fn fit_slope(dofs: &[usize], y: &[f64], k: usize) -> Result<f64> {
    if k < 2 || dofs.len() < k || y.len() != dofs.len() {
        return Err(Error::InvalidInput(format!("rate fit needs 2 <= K <= {} rows, got K = {k}", dofs.len())));
    }
    let n = dofs.len();
    let xs: Vec<f64> = dofs[n - k..].iter().map(|&d| (d as f64).log10()).collect();
    let ys: Vec<f64> = y[n - k..].iter().map(|v| v.log10()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("rate fit over constant dofs".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Error slope of the last `k` rows of a record.
pub fn estimate_rate(record: &ConvergenceRecord, k: usize) -> Result<f64> {
    let dofs: Vec<usize> = record.rows.iter().map(|r| r.dofs).collect();
    let err: Vec<f64> = record.rows.iter().map(|r| r.rel_error).collect();
    fit_slope(&dofs, &err, k)
}

/// Residual slope of the last `k` rows of a record.
pub fn estimate_residual_rate(record: &ConvergenceRecord, k: usize) -> Result<f64> {
    let dofs: Vec<usize> = record.rows.iter().map(|r| r.dofs).collect();
    let eta: Vec<f64> = record.rows.iter().map(|r| r.eta).collect();
    fit_slope(&dofs, &eta, k)
}

impl ConvergenceRecord {
    fn from_rows(rows: Vec<ConvergenceRow>, k: usize) -> Result<Self> {
        let mut rec = Self { rows, error_slope: f64::NAN, eta_slope: f64::NAN };
        let k = k.min(rec.rows.len());
        rec.error_slope = estimate_rate(&rec, k)?;
        if rec.rows.iter().all(|r| r.eta.is_finite()) {
            rec.eta_slope = estimate_residual_rate(&rec, k)?;
        }
        Ok(rec)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CONVERGENCE_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step,
                r.elements,
                r.dofs,
                format_real(r.eta),
                format_real(r.rel_error),
                r.marked
            );
        }
        out
    }

    /// Rows of a convergence CSV; wall times are zero.
    pub fn parse_rows(csv: &str) -> Result<Vec<ConvergenceRow>> {
        let mut lines = csv.lines();
        if lines.next() != Some(CONVERGENCE_HEADER) {
            return Err(Error::Format("convergence CSV header differs".into()));
        }
        lines
            .enumerate()
            .map(|(i, l)| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || Error::Format(format!("CSV row {}: `{l}`", i + 1));
                if f.len() != 6 {
                    return Err(bad());
                }
                Ok(ConvergenceRow {
                    step: f[0].parse().map_err(|_| bad())?,
                    elements: f[1].parse().map_err(|_| bad())?,
                    dofs: f[2].parse().map_err(|_| bad())?,
                    eta: f[3].parse().map_err(|_| bad())?,
                    rel_error: f[4].parse().map_err(|_| bad())?,
                    marked: f[5].parse().map_err(|_| bad())?,
                    wall_time: 0.0,
                })
            })
            .collect()
    }
}

fn residual_total(fields: &SolutionFields, mesh: &Mesh, data: &crate::forms::ProblemData, p_res: usize) -> Result<f64> {
    match fields.method {
        Method::Galerkin => Ok(f64::NAN),
        Method::Dpg(_) => element_residuals(fields, mesh, data, p_res).map(|r| r.total),
    }
}

fn write_outputs(config: &RunConfig, csv_name: &str, csv: &str, last: Option<&SolutionFields>) -> Result<()> {
    let Some(dir) = &config.output else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(csv_name);
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let mut manifest = StudyManifest::new(config.to_text());
    manifest.record(dir, csv_name)?;
    if let Some(fields) = last {
        let name = format!("{}_final.sol", config.stem());
        save_solution(fields, &dir.join(&name))?;
        manifest.record(dir, &name)?;
    }
    manifest.save(dir)?;
    Ok(())
}

/// Uniform refinement study: solve, residual and error on `steps + 1` meshes.
pub fn run_convergence(config: &RunConfig) -> Result<ConvergenceRecord> {
    config.validate()?;
    let material = config.material()?;
    let exact = config.benchmark.exact(material)?;
    let data = exact.problem_data();
    let mut mesh = config.benchmark.mesh(config.n0)?;
    let mut rows = Vec::with_capacity(config.steps + 1);
    let mut last = None;
    for step in 0..=config.steps {
        let t = Instant::now();
        let fields = solve_method(config.method, &mesh, &data, config.p, config.dp)?;
        let eta = residual_total(&fields, &mesh, &data, config.p_res)?;
        let rel_error = crate::exact::error_norms(&fields, &exact, &mesh)?.relative;
        rows.push(ConvergenceRow {
            step,
            elements: mesh.num_triangles(),
            dofs: fields.ndofs(),
            eta,
            rel_error,
            marked: mesh.num_triangles(),
            wall_time: t.elapsed().as_secs_f64(),
        });
        if step < config.steps {
            mesh = mesh.uniform_refine();
        }
        last = Some(fields);
    }
    let rec = ConvergenceRecord::from_rows(rows, config.rate_window())?;
    write_outputs(config, &format!("{}.csv", config.stem()), &rec.to_csv(), last.as_ref())?;
    Ok(rec)
}

/// Adaptive study: `steps` refinements driven by the residual marking rule.
pub fn run_adaptive(config: &RunConfig) -> Result<ConvergenceRecord> {
    config.validate()?;
    let Method::Dpg(_) = config.method else {
        return Err(Error::InvalidInput("adaptive runs need a residual; galerkin has none".into()));
    };
    let material = config.material()?;
    let exact = config.benchmark.exact(material)?;
    let data = exact.problem_data();
    let mesh = config.benchmark.mesh(config.n0)?;
    let t = Instant::now();
    let steps = adaptive_loop(config.method, mesh, &data, Some(&exact), config.p, config.dp, config.p_res, config.steps + 1)?;
    let per_step = t.elapsed().as_secs_f64() / steps.len() as f64;
    let rows = steps
        .iter()
        .enumerate()
        .map(|(i, s)| ConvergenceRow {
            step: i,
            elements: s.mesh.num_triangles(),
            dofs: s.dofs,
            eta: s.report.total,
            rel_error: s.relative_error.unwrap_or(f64::NAN),
            marked: s.marked.len(),
            wall_time: per_step,
        })
        .collect();
    let mut config = config.clone();
    config.refinement = Refinement::Adaptive;
    let rec = ConvergenceRecord::from_rows(rows, config.rate_window())?;
    write_outputs(&config, &format!("{}.csv", config.stem()), &rec.to_csv(), steps.last().map(|s| &s.fields))?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfSupRow {
    pub formulation: Formulation,
    pub level: usize,
    /// Whether the displacement boundary is the whole boundary or empty.
    pub gamma0: bool,
    pub trial_dofs: usize,
    pub test_dofs: usize,
    pub gamma_h: f64,
}

/// Inf-sup table: every formulation on `levels` uniform levels, with the displacement
/// boundary kept and with it removed.
pub fn infsup_table(config: &RunConfig, levels: usize) -> Result<Vec<InfSupRow>> {
    config.validate()?;
    let material = config.material()?;
    let mut rows = Vec::with_capacity(Formulation::ALL.len() * levels * 2);
    for f in Formulation::ALL {
        let mut mesh = config.benchmark.mesh(config.n0)?;
        for level in 0..levels {
            for gamma0 in [true, false] {
                let m = if gamma0 { mesh.clone() } else { mesh.retagged(|_| BoundaryTag::Gamma1) };
                let r = discrete_infsup(f, &m, &material, config.p)?;
                rows.push(InfSupRow {
                    formulation: f,
                    level,
                    gamma0,
                    trial_dofs: r.trial_dofs,
                    test_dofs: r.test_dofs,
                    gamma_h: r.gamma_h,
                });
            }
            mesh = mesh.uniform_refine();
        }
    }
    Ok(rows)
}

pub fn infsup_csv(rows: &[InfSupRow]) -> String {
    let mut out = format!("{INFSUP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.formulation.name(),
            r.level,
            if r.gamma0 { "gamma0" } else { "free" },
            r.trial_dofs,
            r.test_dofs,
            format_real(r.gamma_h)
        );
    }
    out
}

/// Three-level inf-sup table, written as CSV when an output directory is set.
pub fn run_infsup(config: &RunConfig) -> Result<Vec<InfSupRow>> {
    let rows = infsup_table(config, 3)?;
    let name = format!("infsup_{}_p{}.csv", config.benchmark.name(), config.p);
    write_outputs(config, &name, &infsup_csv(&rows), None)?;
    Ok(rows)
}

/// Writes the initial (or `levels` times refined) benchmark mesh as legacy VTK.
pub fn dump_mesh(config: &RunConfig, levels: usize, path: &Path) -> Result<Mesh> {
    let mut mesh = config.benchmark.mesh(config.n0)?;
    for _ in 0..levels {
        mesh = mesh.uniform_refine();
    }
    mesh.write_vtk(path, &[])?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dofs: &[usize], err: &[f64]) -> ConvergenceRecord {
        let rows = dofs
            .iter()
            .zip(err)
            .enumerate()
            .map(|(i, (&d, &e))| ConvergenceRow {
                step: i,
                elements: d,
                dofs: d,
                eta: e,
                rel_error: e,
                marked: 0,
                wall_time: 0.0,
            })
            .collect();
        ConvergenceRecord { rows, error_slope: f64::NAN, eta_slope: f64::NAN }
    }

    #[test]
    fn rate_of_exact_power_law() {
        let dofs = [10, 40, 160, 640, 2560];
        let err: Vec<f64> = dofs.iter().map(|&d| (d as f64).powf(-0.5)).collect();
        assert!((estimate_rate(&record(&dofs, &err), 5).unwrap() + 0.5).abs() < 1e-12);
        assert!((estimate_rate(&record(&[100, 400], &[1e-1, 2.5e-2]), 2).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_window_uses_last_rows() {
        let rec = record(&[1, 2, 4, 100, 400], &[1.0, 1.0, 1.0, 1e-1, 2.5e-2]);
        assert!((estimate_rate(&rec, 2).unwrap() + 1.0).abs() < 1e-12);
        assert!(estimate_rate(&rec, 1).is_err());
        assert!(estimate_rate(&rec, 6).is_err());
        assert!(estimate_rate(&record(&[5, 5], &[1.0, 0.5]), 2).is_err());
    }

    #[test]
    fn config_round_trip_and_errors() {
        let text = "# study\nbenchmark = lshape_singular\nformulation = strong\np = 2\nsteps = 3\nrate_window = 3\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.benchmark, Benchmark::LshapeSingular);
        assert_eq!(c.method, Method::Dpg(Formulation::Strong));
        assert_eq!((c.p, c.dp, c.p_res, c.steps), (2, 1, 4, 3));
        assert_eq!((c.lambda, c.mu), (123.0, 79.3));
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);

        let err = RunConfig::parse("p = 1\n\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = RunConfig::parse("p = 1\np = x\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        assert!(matches!(RunConfig::parse("p 1\n"), Err(Error::Config { line: 1, .. })));
        assert!(RunConfig::parse("p = 2\np_res = 2\n").is_err());
        assert!(RunConfig::parse("steps = 0\n").is_err());
        assert!(RunConfig::parse("lambda = -1\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rec = record(&[12, 48, 192], &[0.1, 1.0 / 3.0, f64::NAN]);
        let rows = ConvergenceRecord::parse_rows(&rec.to_csv()).unwrap();
        for (a, b) in rec.rows.iter().zip(&rows) {
            assert_eq!(a.dofs, b.dofs);
            assert_eq!(a.rel_error.to_bits(), b.rel_error.to_bits());
        }
        assert!(rows[2].eta.is_nan());
    }

    #[test]
    fn small_convergence_run() {
        let c = RunConfig { steps: 2, ..RunConfig::default() };
        let rec = run_convergence(&c).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!(rec.rows.windows(2).all(|w| w[1].dofs > w[0].dofs));
        assert!(rec.error_slope < -0.3);
        let g = RunConfig { method: Method::Galerkin, steps: 1, ..RunConfig::default() };
        let rec = run_convergence(&g).unwrap();
        assert!(rec.eta_slope.is_nan() && rec.error_slope < 0.0);
        assert!(run_adaptive(&g).is_err());
    }

    #[test]
    fn adaptive_smooth_smoke_marks_broadly() {
        let c = RunConfig { refinement: Refinement::Adaptive, steps: 1, ..RunConfig::default() };
        let rec = run_adaptive(&c).unwrap();
        assert_eq!(rec.rows.len(), 2);
        assert!(rec.rows[0].marked * 2 >= rec.rows[0].elements);
    }
}
