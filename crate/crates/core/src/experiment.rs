//! Monte Carlo strong-error studies.
//!
//! Every sample draws one Brownian path on the finest time grid. The
//! reference and all coarse solutions of that sample are driven by the same
//! path (coarse increments are sums of fine ones), so the difference
//! isolates the discretization error. Samples run on a worker pool and are
//! reduced in ascending sample index, which makes the output independent of
//! the number of workers.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{l2_norm, FemError};
use crate::noise::{sample_path, BrownianPath, NoiseError, NoiseEvaluator, NoiseSpec};
use crate::problem::{Discretization, ProblemSpec};
use crate::stepper::{step_count, Scheme, StepError, StepperConfig, TimeStepper};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("study configuration: {0}")]
    Config(String),
    #[error("sample {sample}, scheme {scheme}, resolution {resolution}: {source}")]
    Sample {
        sample: usize,
        scheme: &'static str,
        resolution: f64,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("at least two points are needed, got {0}")]
    TooFewPoints(usize),
    #[error("resolution and error must be positive, got ({0}, {1})")]
    NonPositive(f64, f64),
    #[error("all resolutions are equal")]
    Degenerate,
}

/// Least-squares fit of `log e = p log r + log C`. Returns `(p, C)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<(f64, f64), FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(&(r, e)) = points.iter().find(|&&(r, e)| !(r > 0.0 && e > 0.0)) {
        return Err(FitError::NonPositive(r, e));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let order = sxy / sxx;
    Ok((order, (my - order * mx).exp()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialReference {
    /// Numerical solution on a finer nested mesh.
    Mesh { nx: usize, ny: usize },
    /// The problem's closed-form solution.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyKind {
    Temporal {
        dt_list: Vec<f64>,
        reference_dt: f64,
        nx: usize,
        ny: usize,
    },
    Spatial {
        meshes: Vec<(usize, usize)>,
        reference: SpatialReference,
        dt: f64,
    },
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    /// `None` switches the noise off.
    pub noise: Option<NoiseSpec>,
    pub samples: usize,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    /// Newton and linear solver settings; `dt` and `scheme` are overridden
    /// per run.
    pub stepper: StepperConfig,
    pub workers: usize,
    pub kind: StudyKind,
}

impl StudyConfig {
    pub fn check(&self) -> Result<(), StudyError> {
        if self.samples == 0 {
            return Err(StudyError::Config("at least one sample is required".into()));
        }
        if self.schemes.is_empty() {
            return Err(StudyError::Config("no scheme selected".into()));
        }
        let t = self.problem.t_final;
        if !(t > 0.0) {
            return Err(StudyError::Config(format!("final time must be positive, got {t}")));
        }
        match &self.kind {
            StudyKind::Temporal {
                dt_list,
                reference_dt,
                ..
            } => {
                step_count(t, *reference_dt)?;
                for &dt in dt_list {
                    let ratio = (dt / reference_dt).round();
                    if !(ratio >= 1.0) || (ratio * reference_dt - dt).abs() > 1e-9 * dt {
                        return Err(StudyError::Config(format!(
                            "dt = {dt} is not an integer multiple of the reference dt {reference_dt}"
                        )));
                    }
                    step_count(t, dt)?;
                }
            }
            StudyKind::Spatial {
                meshes,
                reference,
                dt,
            } => {
                step_count(t, *dt)?;
                if let SpatialReference::Mesh { nx, ny } = reference {
                    for &(cx, cy) in meshes {
                        if cx == 0 || cy == 0 || nx % cx != 0 || ny % cy != 0 {
                            return Err(StudyError::Config(format!(
                                "mesh {cx}x{cy} is not a nested coarsening of {nx}x{ny}"
                            )));
                        }
                    }
                } else if self.problem.exact.is_none() {
                    return Err(StudyError::Config(
                        "an exact reference needs a problem with a closed-form solution".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyType {
    Temporal,
    Spatial,
}

impl StudyType {
    pub fn resolution_name(self) -> &'static str {
        match self {
            StudyType::Temporal => "dt",
            StudyType::Spatial => "h",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub resolution: f64,
    pub rms_error: f64,
    /// Sample standard deviation of the per-sample errors.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeReport {
    pub scheme: Scheme,
    /// Sorted by increasing resolution.
    pub points: Vec<ConvergencePoint>,
    /// NaN when fewer than two positive points are available.
    pub fitted_order: f64,
    pub fitted_constant: f64,
    pub newton_iterations_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub study: StudyType,
    pub schemes: Vec<SchemeReport>,
    pub n_samples: usize,
    pub master_seed: u64,
    pub wall_time_secs: f64,
    /// Echo of the resolved configuration, copied into `report.txt`.
    pub config_echo: String,
}

impl ConvergenceReport {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

/// Per-sample output: `errors[scheme][resolution]` and the largest Newton
/// iteration count per scheme.
struct SampleResult {
    errors: Vec<Vec<f64>>,
    newton_max: Vec<usize>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, StudyError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StudyError::Config(format!("worker pool: {e}")))
}

fn reduce(
    study: StudyType,
    cfg: &StudyConfig,
    resolutions: &[f64],
    results: Vec<Result<SampleResult, StudyError>>,
    started: Instant,
) -> Result<ConvergenceReport, StudyError> {
    let mut per_sample = Vec::with_capacity(results.len());
    for r in results {
        per_sample.push(r?);
    }
    let n = per_sample.len() as f64;
    let mut schemes = Vec::with_capacity(cfg.schemes.len());
    for (si, &scheme) in cfg.schemes.iter().enumerate() {
        let mut points: Vec<ConvergencePoint> = resolutions
            .iter()
            .enumerate()
            .map(|(ri, &resolution)| {
                // ascending sample index
                let mut sum_sq = 0.0;
                let mut sum = 0.0;
                for s in &per_sample {
                    let e = s.errors[si][ri];
                    sum_sq += e * e;
                    sum += e;
                }
                let mean = sum / n;
                let var = if per_sample.len() > 1 {
                    ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                ConvergencePoint {
                    resolution,
                    rms_error: (sum_sq / n).sqrt(),
                    std_error: var.sqrt(),
                }
            })
            .collect();
        points.sort_by(|a, b| a.resolution.total_cmp(&b.resolution));
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.resolution, p.rms_error)).collect();
        let (fitted_order, fitted_constant) = fit_order(&pairs).unwrap_or((f64::NAN, f64::NAN));
        schemes.push(SchemeReport {
            scheme,
            points,
            fitted_order,
            fitted_constant,
            newton_iterations_max: per_sample.iter().map(|s| s.newton_max[si]).max().unwrap_or(0),
        });
    }
    Ok(ConvergenceReport {
        study,
        schemes,
        n_samples: per_sample.len(),
        master_seed: cfg.master_seed,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config_echo: String::new(),
    })
}

fn draw_path(
    noise: Option<&NoiseSpec>,
    n_steps: usize,
    dt: f64,
    seed: u64,
    sample: usize,
) -> Result<Option<BrownianPath>, StudyError> {
    noise
        .map(|spec| sample_path(spec, n_steps, dt, seed, sample as u64))
        .transpose()
        .map_err(Into::into)
}

/// Temporal strong-error study on a fixed mesh.
pub fn run_temporal_study(cfg: &StudyConfig) -> Result<ConvergenceReport, StudyError> {
    cfg.check()?;
    let StudyKind::Temporal {
        dt_list,
        reference_dt,
        nx,
        ny,
    } = &cfg.kind
    else {
        return Err(StudyError::Config("expected a temporal study".into()));
    };
    let started = Instant::now();
    let problem = &cfg.problem;
    let disc = problem.discretize(*nx, *ny)?;
    let eval = cfg
        .noise
        .as_ref()
        .map(|spec| NoiseEvaluator::new(spec, &disc.mesh))
        .transpose()?;
    let x0 = disc.initial_field(problem);
    let n_ref = step_count(problem.t_final, *reference_dt)?;

    // steppers[scheme][0] is the reference, then one per dt
    let mut steppers = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let base = cfg.stepper.with_scheme(scheme);
        let mut row = vec![(TimeStepper::new(&disc.system, &disc.drift, base.with_dt(*reference_dt))?, n_ref)];
        for &dt in dt_list {
            row.push((
                TimeStepper::new(&disc.system, &disc.drift, base.with_dt(dt))?,
                step_count(problem.t_final, dt)?,
            ));
        }
        steppers.push(row);
    }

    let run_sample = |sample: usize| -> Result<SampleResult, StudyError> {
        let path = draw_path(cfg.noise.as_ref(), n_ref, *reference_dt, cfg.master_seed, sample)?;
        let noise = eval.as_ref().zip(path.as_ref());
        let mut errors = Vec::with_capacity(cfg.schemes.len());
        let mut newton_max = Vec::with_capacity(cfg.schemes.len());
        for (si, &scheme) in cfg.schemes.iter().enumerate() {
            let fail = |resolution: f64| {
                move |source| StudyError::Sample {
                    sample,
                    scheme: scheme.name(),
                    resolution,
                    source,
                }
            };
            let (ref_stepper, n) = &steppers[si][0];
            let reference = ref_stepper
                .run_with_noise(&x0, *n, noise)
                .map_err(fail(*reference_dt))?;
            let mut worst = reference.newton_iterations_max;
            let mut row = Vec::with_capacity(dt_list.len());
            for (k, &dt) in dt_list.iter().enumerate() {
                let (stepper, n) = &steppers[si][k + 1];
                let coarse = stepper.run_with_noise(&x0, *n, noise).map_err(fail(dt))?;
                worst = worst.max(coarse.newton_iterations_max);
                let diff: Vec<f64> = reference
                    .terminal
                    .iter()
                    .zip(coarse.terminal.iter())
                    .map(|(a, b)| a - b)
                    .collect();
                row.push(l2_norm(&disc.system.mass, &diff)?);
            }
            errors.push(row);
            newton_max.push(worst);
        }
        Ok(SampleResult { errors, newton_max })
    };

    let results: Vec<Result<SampleResult, StudyError>> =
        pool(cfg.workers)?.install(|| (0..cfg.samples).into_par_iter().map(run_sample).collect());
    reduce(StudyType::Temporal, cfg, dt_list, results, started)
}

/// Spatial strong-error study with a fixed time step.
pub fn run_spatial_study(cfg: &StudyConfig) -> Result<ConvergenceReport, StudyError> {
    cfg.check()?;
    let StudyKind::Spatial {
        meshes,
        reference,
        dt,
    } = &cfg.kind
    else {
        return Err(StudyError::Config("expected a spatial study".into()));
    };
    let started = Instant::now();
    let problem = &cfg.problem;
    let n_steps = step_count(problem.t_final, *dt)?;

    struct Level {
        disc: Discretization,
        eval: Option<NoiseEvaluator>,
        lookup: Option<Vec<usize>>,
    }
    let level = |nx: usize, ny: usize, fine: Option<&Discretization>| -> Result<Level, StudyError> {
        let disc = problem.discretize(nx, ny)?;
        let eval = cfg
            .noise
            .as_ref()
            .map(|spec| NoiseEvaluator::new(spec, &disc.mesh))
            .transpose()?;
        let lookup = match fine {
            Some(f) => Some(disc.mesh.nested_lookup(&f.mesh).map_err(FemError::from)?),
            None => None,
        };
        Ok(Level { disc, eval, lookup })
    };
    let reference_level = match reference {
        SpatialReference::Mesh { nx, ny } => Some(level(*nx, *ny, None)?),
        SpatialReference::Exact => None,
    };
    let levels: Vec<Level> = meshes
        .iter()
        .map(|&(nx, ny)| level(nx, ny, reference_level.as_ref().map(|l| &l.disc)))
        .collect::<Result<_, _>>()?;
    let resolutions: Vec<f64> = levels.iter().map(|l| l.disc.mesh.h).collect();

    let mut ref_steppers = Vec::new();
    let mut steppers = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let stepper_cfg = cfg.stepper.with_scheme(scheme).with_dt(*dt);
        if let Some(r) = &reference_level {
            ref_steppers.push(TimeStepper::new(&r.disc.system, &r.disc.drift, stepper_cfg)?);
        }
        steppers.push(
            levels
                .iter()
                .map(|l| TimeStepper::new(&l.disc.system, &l.disc.drift, stepper_cfg))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    let initial: Vec<_> = levels.iter().map(|l| l.disc.initial_field(problem)).collect();
    let ref_initial = reference_level.as_ref().map(|r| r.disc.initial_field(problem));

    let run_sample = |sample: usize| -> Result<SampleResult, StudyError> {
        let path = draw_path(cfg.noise.as_ref(), n_steps, *dt, cfg.master_seed, sample)?;
        let mut errors = Vec::with_capacity(cfg.schemes.len());
        let mut newton_max = Vec::with_capacity(cfg.schemes.len());
        for (si, &scheme) in cfg.schemes.iter().enumerate() {
            let fail = |resolution: f64| {
                move |source| StudyError::Sample {
                    sample,
                    scheme: scheme.name(),
                    resolution,
                    source,
                }
            };
            let mut worst = 0;
            let reference_terminal = match (&reference_level, &ref_initial) {
                (Some(r), Some(x0)) => {
                    let noise = r.eval.as_ref().zip(path.as_ref());
                    let sol = ref_steppers[si]
                        .run_with_noise(x0, n_steps, noise)
                        .map_err(fail(r.disc.mesh.h))?;
                    worst = sol.newton_iterations_max;
                    Some(sol.terminal)
                }
                _ => None,
            };
            let mut row = Vec::with_capacity(levels.len());
            for (li, lvl) in levels.iter().enumerate() {
                let noise = lvl.eval.as_ref().zip(path.as_ref());
                let sol = steppers[si][li]
                    .run_with_noise(&initial[li], n_steps, noise)
                    .map_err(fail(lvl.disc.mesh.h))?;
                worst = worst.max(sol.newton_iterations_max);
                let target: Vec<f64> = match (&reference_terminal, &lvl.lookup) {
                    (Some(fine), Some(lookup)) => lookup.iter().map(|&k| fine[k]).collect(),
                    _ => {
                        let exact = problem.exact.as_ref().expect("checked in StudyConfig::check");
                        lvl.disc
                            .mesh
                            .interpolate(|x, y| exact(x, y, problem.t_final))
                    }
                };
                let diff: Vec<f64> = target.iter().zip(sol.terminal.iter()).map(|(a, b)| a - b).collect();
                row.push(l2_norm(&lvl.disc.system.mass, &diff)?);
            }
            errors.push(row);
            newton_max.push(worst);
        }
        Ok(SampleResult { errors, newton_max })
    };

    let results: Vec<Result<SampleResult, StudyError>> =
        pool(cfg.workers)?.install(|| (0..cfg.samples).into_par_iter().map(run_sample).collect());
    reduce(StudyType::Spatial, cfg, &resolutions, results, started)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub errors_csv: PathBuf,
    pub report_txt: PathBuf,
    pub svg: PathBuf,
}

pub const ERRORS_CSV_HEADER: &str = "scheme,resolution,rms_error,n_samples,seed";

/// Shortest decimal that parses back to the same double.
fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

pub fn errors_csv(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    out.push_str(ERRORS_CSV_HEADER);
    out.push('\n');
    for s in &report.schemes {
        for p in &s.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.scheme.name(),
                fmt_real(p.resolution),
                fmt_real(p.rms_error),
                report.n_samples,
                report.master_seed
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scheme: Scheme,
    pub resolution: f64,
    pub rms_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn parse_errors_csv(text: &str) -> Result<Vec<CsvRow>, StudyError> {
    let bad = |line: usize, what: &str| StudyError::Report(format!("errors.csv line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ERRORS_CSV_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1, "expected 5 fields"));
            }
            Ok(CsvRow {
                scheme: Scheme::parse(f[0]).ok_or_else(|| bad(i + 1, "unknown scheme"))?,
                resolution: f[1].parse().map_err(|_| bad(i + 1, "resolution"))?,
                rms_error: f[2].parse().map_err(|_| bad(i + 1, "rms_error"))?,
                n_samples: f[3].parse().map_err(|_| bad(i + 1, "n_samples"))?,
                seed: f[4].parse().map_err(|_| bad(i + 1, "seed"))?,
            })
        })
        .collect()
}

pub fn report_text(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    let study = match report.study {
        StudyType::Temporal => "temporal",
        StudyType::Spatial => "spatial",
    };
    let _ = writeln!(out, "{study} convergence study");
    let _ = writeln!(out, "samples: {}", report.n_samples);
    let _ = writeln!(out, "master seed: {}", report.master_seed);
    let _ = writeln!(out, "wall time: {:.2} s", report.wall_time_secs);
    for s in &report.schemes {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "[{}] fitted order {:.4}, constant {:.4e}, max Newton iterations per step {}",
            s.scheme.name(),
            s.fitted_order,
            s.fitted_constant,
            s.newton_iterations_max
        );
        let _ = writeln!(out, "  {:>14} {:>14} {:>14}", report.study.resolution_name(), "rms_error", "sample_std");
        for p in &s.points {
            let _ = writeln!(out, "  {:>14.6e} {:>14.6e} {:>14.6e}", p.resolution, p.rms_error, p.std_error);
        }
    }
    if !report.config_echo.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "configuration:");
        out.push_str(&report.config_echo);
        if !report.config_echo.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log–log chart of rms error against resolution.
pub fn convergence_svg(report: &ConvergenceReport) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (80.0, 20.0, 30.0, 60.0);
    let pts: Vec<(f64, f64)> = report
        .schemes
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.resolution > 0.0 && p.rms_error > 0.0)
        .map(|p| (p.resolution.log10(), p.rms_error.log10()))
        .collect();
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo.is_finite() {
            (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"##,
            h - bottom,
            h - bottom + 18.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            w - right,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 15.0,
        report.study.resolution_name()
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">rms error</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for (k, s) in report.schemes.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.resolution > 0.0 && p.rms_error > 0.0)
            .map(|p| format!("{:.1},{:.1}", px(p.resolution.log10()), py(p.rms_error.log10())))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3.5" fill="{color}"/>"#);
        }
        let ly = top + 18.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{} (order {:.2})</text>"#,
            left + 12.0,
            left + 36.0,
            left + 42.0,
            ly + 4.0,
            s.scheme.name(),
            s.fitted_order
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `errors.csv`, `report.txt` and `convergence.svg` into `out_dir`.
/// Nothing is written if any scheme has no points.
pub fn emit_report(report: &ConvergenceReport, out_dir: &Path) -> Result<ReportFiles, StudyError> {
    if report.schemes.is_empty() || report.schemes.iter().any(|s| s.points.is_empty()) {
        return Err(StudyError::Report("report has no points".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let files = ReportFiles {
        errors_csv: out_dir.join("errors.csv"),
        report_txt: out_dir.join("report.txt"),
        svg: out_dir.join("convergence.svg"),
    };
    write_file(&files.errors_csv, &errors_csv(report))?;
    write_file(&files.report_txt, &report_text(report))?;
    write_file(&files.svg, &convergence_svg(report))?;
    Ok(files)
}

fn write_file(path: &Path, contents: &str) -> Result<(), StudyError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}
