//! Flat INI-style run configuration.
//!
//! Lines are `key = value`; `[section]` headers prefix subsequent bare keys
//! with `section.`, while keys that already contain a dot are taken as
//! written. `#` starts a comment. Real numbers accept fractions such as
//! `1/64`. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::drift::DriftPolynomial;
use crate::experiment::{SpatialReference, StudyConfig, StudyKind};
use crate::fem::{DiffusionField, OperatorSpec, VelocityField};
use crate::linalg::{SolveMethod, SolveSettings};
use crate::mesh::{BoundarySpec, Side};
use crate::noise::{build_spectrum, NoiseError, NoiseSpec};
use crate::problem::{GardingShift, InitialData, ProblemSpec};
use crate::stepper::{step_count, Scheme, StepperConfig};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: invalid value for `{key}`: {message}")]
    Value {
        origin: String,
        key: String,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    TemporalStudy,
    SpatialStudy,
    Validate,
    MeshDump,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Solve,
        Command::TemporalStudy,
        Command::SpatialStudy,
        Command::Validate,
        Command::MeshDump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::TemporalStudy => "temporal-study",
            Command::SpatialStudy => "spatial-study",
            Command::Validate => "validate",
            Command::MeshDump => "mesh-dump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionSetting {
    Scalar(f64),
    /// `d11, d12, d22` of a constant symmetric tensor.
    Tensor([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocitySetting {
    Zero,
    Cellular(f64),
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSetting {
    Constant(f64),
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: String,
    pub workers: usize,
    pub seed: u64,
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub t_final: f64,
    pub initial: InitialSetting,
    pub diffusion: DiffusionSetting,
    pub velocity: VelocitySetting,
    pub robin_alpha0: f64,
    pub garding_shift: GardingShift,
    pub dirichlet: Vec<Side>,
    pub boundary_value: f64,
    pub phi: Vec<f64>,
    pub noise_enabled: bool,
    pub beta: f64,
    pub delta: f64,
    pub modes: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_method: SolveMethod,
    pub linear_tol: f64,
    pub linear_restart: usize,
    /// 0 selects the solver's own default.
    pub linear_max_iter: usize,
    pub samples: usize,
    pub schemes: Vec<Scheme>,
    pub dt_list: Vec<f64>,
    pub reference_dt: f64,
    pub mesh_list: Vec<(usize, usize)>,
    pub reference_mesh: SpatialReference,
    /// 0 means `1e-3 · t_final`, resolved after parsing.
    pub study_dt: f64,
    pub solve_sample: u64,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    /// The reaction benchmark with desk-scale study settings.
    fn default() -> Self {
        Self {
            command: Command::Validate,
            out_dir: "out".into(),
            workers: 1,
            seed: DEFAULT_SEED,
            l1: 1.0,
            l2: 1.0,
            nx: 32,
            ny: 32,
            t_final: 1.0,
            initial: InitialSetting::Constant(1.0),
            diffusion: DiffusionSetting::Scalar(0.01),
            velocity: VelocitySetting::Cellular(1.0),
            robin_alpha0: 0.0,
            garding_shift: GardingShift::Auto,
            dirichlet: vec![Side::Left],
            boundary_value: 1.0,
            phi: vec![0.0, 1.0, 0.0, 0.0, 0.0, -1.0],
            noise_enabled: true,
            beta: 2.0,
            delta: 0.001,
            modes: 64,
            scheme: Scheme::Implicit,
            dt: 1.0 / 64.0,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            linear_method: SolveMethod::DirectLu,
            linear_tol: 1e-10,
            linear_restart: 50,
            linear_max_iter: 0,
            samples: 50,
            schemes: vec![Scheme::Implicit, Scheme::SemiImplicit],
            dt_list: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            reference_dt: 1.0 / 1024.0,
            mesh_list: vec![(4, 4), (8, 8), (16, 16), (32, 32)],
            reference_mesh: SpatialReference::Mesh { nx: 64, ny: 64 },
            study_dt: 0.0,
            solve_sample: 0,
            explicit: BTreeSet::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "command",
    "out_dir",
    "workers",
    "seed",
    "domain.l1",
    "domain.l2",
    "mesh.nx",
    "mesh.ny",
    "problem.t_final",
    "problem.initial",
    "operator.diffusion",
    "operator.velocity",
    "operator.robin_alpha0",
    "operator.garding_shift",
    "boundary.dirichlet",
    "boundary.value",
    "phi",
    "noise.enabled",
    "noise.beta",
    "noise.delta",
    "noise.modes",
    "scheme",
    "dt",
    "newton.tol",
    "newton.max_iter",
    "linear.method",
    "linear.tol",
    "linear.restart",
    "linear.max_iter",
    "study.samples",
    "study.schemes",
    "study.dt_list",
    "study.reference_dt",
    "study.mesh_list",
    "study.reference_mesh",
    "study.dt",
    "solve.sample",
];

fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let num: f64 = a.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let den: f64 = b.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            num / den
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| item(p.trim())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

fn parse_mesh_size(s: &str) -> Result<(usize, usize), String> {
    match s.split_once('x') {
        Some((a, b)) => Ok((parse_count(a)?, parse_count(b)?)),
        None => parse_count(s).map(|n| (n, n)),
    }
}

fn positive(x: f64) -> Result<f64, String> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn positive_count(n: usize) -> Result<usize, String> {
    if n > 0 {
        Ok(n)
    } else {
        Err("must be at least 1".into())
    }
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

fn mesh_size((nx, ny): (usize, usize)) -> String {
    if nx == ny {
        nx.to_string()
    } else {
        format!("{nx}x{ny}")
    }
}

impl RunConfig {
    /// Whether `key` was given in the file or an override.
    pub fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "command" => {
                self.command = Command::parse(v).ok_or_else(|| {
                    let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                    format!("`{v}` is not one of {}", names.join(", "))
                })?
            }
            "out_dir" => self.out_dir = v.to_string(),
            "workers" => self.workers = positive_count(parse_count(v)?)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("`{v}` is not a u64"))?,
            "domain.l1" => self.l1 = positive(parse_real(v)?)?,
            "domain.l2" => self.l2 = positive(parse_real(v)?)?,
            "mesh.nx" => self.nx = positive_count(parse_count(v)?)?,
            "mesh.ny" => self.ny = positive_count(parse_count(v)?)?,
            "problem.t_final" => {
                let t = parse_real(v)?;
                if t < 0.0 {
                    return Err(format!("must be non-negative, got {t}"));
                }
                self.t_final = t
            }
            "problem.initial" => {
                self.initial = match v.split_once(':') {
                    _ if v == "cosine" => InitialSetting::Cosine,
                    Some(("constant", c)) => InitialSetting::Constant(parse_real(c)?),
                    _ => return Err(format!("expected `constant:<value>` or `cosine`, got `{v}`")),
                }
            }
            "operator.diffusion" => {
                let parts = parse_list(v, parse_real)?;
                self.diffusion = match parts[..] {
                    [d] => DiffusionSetting::Scalar(positive(d)?),
                    [a, b, c] => DiffusionSetting::Tensor([a, b, c]),
                    _ => return Err("expected a scalar or `d11,d12,d22`".into()),
                }
            }
            "operator.velocity" => {
                self.velocity = match v.split_once(':') {
                    _ if v == "zero" => VelocitySetting::Zero,
                    Some(("cellular", a)) => VelocitySetting::Cellular(parse_real(a)?),
                    Some(("uniform", ab)) => match parse_list(ab, parse_real)?[..] {
                        [a, b] => VelocitySetting::Uniform(a, b),
                        _ => return Err("expected `uniform:<qx>,<qy>`".into()),
                    },
                    _ => {
                        return Err(format!(
                            "expected `zero`, `cellular:<amplitude>` or `uniform:<qx>,<qy>`, got `{v}`"
                        ))
                    }
                }
            }
            "operator.robin_alpha0" => self.robin_alpha0 = parse_real(v)?,
            "operator.garding_shift" => {
                self.garding_shift = if v == "auto" {
                    GardingShift::Auto
                } else {
                    let c = parse_real(v)?;
                    if c < 0.0 {
                        return Err(format!("must be `auto` or non-negative, got {c}"));
                    }
                    GardingShift::Fixed(c)
                }
            }
            "boundary.dirichlet" => {
                self.dirichlet = if v == "none" {
                    Vec::new()
                } else {
                    parse_list(v, |s| Side::parse(s).ok_or_else(|| format!("unknown side `{s}`")))?
                }
            }
            "boundary.value" => self.boundary_value = parse_real(v)?,
            "phi" => self.phi = parse_list(v, parse_real)?,
            "noise.enabled" => self.noise_enabled = parse_bool(v)?,
            "noise.beta" => self.beta = positive(parse_real(v)?)?,
            "noise.delta" => self.delta = positive(parse_real(v)?)?,
            "noise.modes" => self.modes = positive_count(parse_count(v)?)?,
            "scheme" => self.scheme = Scheme::parse(v).ok_or_else(|| format!("unknown scheme `{v}`"))?,
            "dt" => self.dt = positive(parse_real(v)?)?,
            "newton.tol" => self.newton_tol = positive(parse_real(v)?)?,
            "newton.max_iter" => self.newton_max_iter = positive_count(parse_count(v)?)?,
            "linear.method" => {
                self.linear_method = match v {
                    "direct_lu" | "direct" => SolveMethod::DirectLu,
                    "krylov" | "gmres" => SolveMethod::KrylovNonsymmetric,
                    _ => return Err(format!("expected `direct_lu` or `krylov`, got `{v}`")),
                }
            }
            "linear.tol" => self.linear_tol = positive(parse_real(v)?)?,
            "linear.restart" => self.linear_restart = positive_count(parse_count(v)?)?,
            "linear.max_iter" => self.linear_max_iter = parse_count(v)?,
            "study.samples" => self.samples = positive_count(parse_count(v)?)?,
            "study.schemes" => {
                self.schemes =
                    parse_list(v, |s| Scheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}`")))?
            }
            "study.dt_list" => self.dt_list = parse_list(v, |s| positive(parse_real(s)?))?,
            "study.reference_dt" => self.reference_dt = positive(parse_real(v)?)?,
            "study.mesh_list" => self.mesh_list = parse_list(v, parse_mesh_size)?,
            "study.reference_mesh" => {
                self.reference_mesh = if v == "exact" {
                    SpatialReference::Exact
                } else {
                    let (nx, ny) = parse_mesh_size(v)?;
                    SpatialReference::Mesh { nx, ny }
                }
            }
            "study.dt" => {
                let dt = parse_real(v)?;
                if dt < 0.0 {
                    return Err(format!("must be non-negative, got {dt}"));
                }
                self.study_dt = dt
            }
            "solve.sample" => self.solve_sample = v.parse().map_err(|_| format!("`{v}` is not a u64"))?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    fn set_from(&mut self, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                origin: origin.into(),
                key: key.into(),
            });
        }
        self.set(key, value).map_err(|message| ConfigError::Value {
            origin: origin.into(),
            key: key.into(),
            message,
        })
    }

    fn resolve(&mut self) {
        if self.study_dt == 0.0 {
            self.study_dt = 1e-3 * self.t_final;
        }
    }

    /// Fully resolved configuration in a form that parses back to an equal
    /// value.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(s, "command = {}", self.command.name());
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "phi = {}", join(self.phi.iter().map(|&c| real(c)).collect()));
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "dt = {}", real(self.dt));
        let _ = writeln!(s, "\n[domain]\nl1 = {}\nl2 = {}", real(self.l1), real(self.l2));
        let _ = writeln!(s, "\n[mesh]\nnx = {}\nny = {}", self.nx, self.ny);
        let initial = match self.initial {
            InitialSetting::Constant(c) => format!("constant:{}", real(c)),
            InitialSetting::Cosine => "cosine".into(),
        };
        let _ = writeln!(s, "\n[problem]\nt_final = {}\ninitial = {initial}", real(self.t_final));
        let diffusion = match self.diffusion {
            DiffusionSetting::Scalar(d) => real(d),
            DiffusionSetting::Tensor(t) => join(t.iter().map(|&d| real(d)).collect()),
        };
        let velocity = match self.velocity {
            VelocitySetting::Zero => "zero".into(),
            VelocitySetting::Cellular(a) => format!("cellular:{}", real(a)),
            VelocitySetting::Uniform(a, b) => format!("uniform:{},{}", real(a), real(b)),
        };
        let shift = match self.garding_shift {
            GardingShift::Auto => "auto".into(),
            GardingShift::Fixed(c) => real(c),
        };
        let _ = writeln!(
            s,
            "\n[operator]\ndiffusion = {diffusion}\nvelocity = {velocity}\nrobin_alpha0 = {}\ngarding_shift = {shift}",
            real(self.robin_alpha0)
        );
        let sides = if self.dirichlet.is_empty() {
            "none".into()
        } else {
            join(self.dirichlet.iter().map(|s| s.name().to_string()).collect())
        };
        let _ = writeln!(s, "\n[boundary]\ndirichlet = {sides}\nvalue = {}", real(self.boundary_value));
        let _ = writeln!(
            s,
            "\n[noise]\nenabled = {}\nbeta = {}\ndelta = {}\nmodes = {}",
            self.noise_enabled,
            real(self.beta),
            real(self.delta),
            self.modes
        );
        let _ = writeln!(s, "\n[newton]\ntol = {}\nmax_iter = {}", real(self.newton_tol), self.newton_max_iter);
        let method = match self.linear_method {
            SolveMethod::DirectLu => "direct_lu",
            SolveMethod::KrylovNonsymmetric => "krylov",
        };
        let _ = writeln!(
            s,
            "\n[linear]\nmethod = {method}\ntol = {}\nrestart = {}\nmax_iter = {}",
            real(self.linear_tol),
            self.linear_restart,
            self.linear_max_iter
        );
        let reference_mesh = match self.reference_mesh {
            SpatialReference::Exact => "exact".into(),
            SpatialReference::Mesh { nx, ny } => mesh_size((nx, ny)),
        };
        let _ = writeln!(
            s,
            "\n[study]\nsamples = {}\nschemes = {}\ndt_list = {}\nreference_dt = {}\nmesh_list = {}\nreference_mesh = {reference_mesh}\ndt = {}",
            self.samples,
            join(self.schemes.iter().map(|s| s.name().to_string()).collect()),
            join(self.dt_list.iter().map(|&d| real(d)).collect()),
            real(self.reference_dt),
            join(self.mesh_list.iter().map(|&m| mesh_size(m)).collect()),
            real(self.study_dt)
        );
        let _ = writeln!(s, "\n[solve]\nsample = {}", self.solve_sample);
        s
    }

    pub fn drift(&self) -> DriftPolynomial {
        DriftPolynomial::new(&self.phi)
    }

    pub fn problem(&self) -> ProblemSpec {
        use std::f64::consts::PI;
        let diffusion = match self.diffusion {
            DiffusionSetting::Scalar(d) => DiffusionField::Isotropic(d),
            DiffusionSetting::Tensor([a, b, c]) => DiffusionField::Constant([[a, b], [b, c]]),
        };
        let advection = match self.velocity {
            VelocitySetting::Zero => VelocityField::Zero,
            VelocitySetting::Cellular(amplitude) => VelocityField::Cellular {
                amplitude,
                l1: self.l1,
                l2: self.l2,
            },
            VelocitySetting::Uniform(a, b) => VelocityField::Uniform([a, b]),
        };
        let drift = self.drift();
        // e^{-λt} times the cosine mode solves the linear problem when the
        // operator is the Laplacian, the drift vanishes and no side is
        // Dirichlet
        let exact = (self.initial == InitialSetting::Cosine
            && matches!(self.diffusion, DiffusionSetting::Scalar(_))
            && self.velocity == VelocitySetting::Zero
            && self.robin_alpha0 == 0.0
            && self.dirichlet.is_empty()
            && drift.coefficients().is_empty()
            && !self.noise_enabled)
            .then(|| {
                let DiffusionSetting::Scalar(d) = self.diffusion else {
                    unreachable!()
                };
                let (a, b) = (PI / self.l1, PI / self.l2);
                let rate = d * (a * a + b * b);
                std::sync::Arc::new(move |x: f64, y: f64, t: f64| {
                    (-rate * t).exp() * (a * x).cos() * (b * y).cos()
                }) as crate::problem::ExactSolution
            });
        ProblemSpec {
            l1: self.l1,
            l2: self.l2,
            operator: OperatorSpec {
                diffusion,
                advection,
                robin_alpha0: self.robin_alpha0,
                garding_shift: 0.0,
            },
            shift: self.garding_shift,
            boundary: BoundarySpec {
                dirichlet_sides: self.dirichlet.clone(),
                dirichlet_value: self.boundary_value,
                robin_alpha0: self.robin_alpha0,
            },
            drift,
            initial: match self.initial {
                InitialSetting::Constant(c) => InitialData::Constant(c),
                InitialSetting::Cosine => InitialData::CosineMode,
            },
            t_final: self.t_final,
            exact,
        }
    }

    pub fn noise_spec(&self) -> Result<Option<NoiseSpec>, NoiseError> {
        if !self.noise_enabled {
            return Ok(None);
        }
        build_spectrum(self.beta, self.delta, self.modes, self.modes, self.l1, self.l2).map(Some)
    }

    pub fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            method: self.linear_method,
            rel_tol: self.linear_tol,
            max_iterations: (self.linear_max_iter > 0).then_some(self.linear_max_iter),
            restart: self.linear_restart,
        }
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            scheme: self.scheme,
            dt: self.dt,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            solve: self.solve_settings(),
        }
    }

    pub fn temporal_study(&self) -> Result<StudyConfig, NoiseError> {
        Ok(StudyConfig {
            problem: self.problem(),
            noise: self.noise_spec()?,
            samples: self.samples,
            master_seed: self.seed,
            schemes: self.schemes.clone(),
            stepper: self.stepper_config(),
            workers: self.workers,
            kind: StudyKind::Temporal {
                dt_list: self.dt_list.clone(),
                reference_dt: self.reference_dt,
                nx: self.nx,
                ny: self.ny,
            },
        })
    }

    pub fn spatial_study(&self) -> Result<StudyConfig, NoiseError> {
        Ok(StudyConfig {
            kind: StudyKind::Spatial {
                meshes: self.mesh_list.clone(),
                reference: self.reference_mesh.clone(),
                dt: self.study_dt,
            },
            ..self.temporal_study()?
        })
    }

    /// Time steps the current command will take.
    fn time_steps(&self) -> Vec<f64> {
        match self.command {
            Command::TemporalStudy => {
                let mut v = self.dt_list.clone();
                v.push(self.reference_dt);
                v
            }
            Command::SpatialStudy => vec![self.study_dt],
            _ => vec![self.dt],
        }
    }
}

/// Parses configuration text and applies `overrides` (`key=value`) last.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("malformed section header `{line}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let full = if key.contains('.') || section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        cfg.set_from(&format!("line {line_no}"), &full, value)?;
    }
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Value {
            origin: "override".into(),
            key: o.clone(),
            message: "expected `key=value`".into(),
        })?;
        cfg.set_from("override", key.trim(), value)?;
    }
    cfg.resolve();
    Ok(cfg)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, overrides)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// One-sided Lipschitz estimate of φ without the shift compensation.
    pub l0: f64,
    pub shift: f64,
    pub trace_check: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        let trace = self.trace_check.map_or("n/a".to_string(), |t| format!("{t:.6e}"));
        let _ = writeln!(s, "L0 = {:.6}, c0 = {}, trace_check = {trace}", self.l0, self.shift);
        s
    }
}

const L0_TRIALS: usize = 10_000;
const L0_SEED: u64 = 7;

/// Checks every modelling assumption and cross-field constraint of `cfg`.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, result: Result<String, String>| {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.push(Check { name, passed, detail });
    };

    let drift = cfg.drift();
    push(
        "drift polynomial is odd with negative leading coefficient",
        drift
            .assert_admissible()
            .map(|_| format!("degree {}", drift.degree()))
            .map_err(|e| e.to_string()),
    );

    let l0 = drift.one_sided_constant_estimate(L0_TRIALS, L0_SEED);
    push(
        "drift is one-sided Lipschitz",
        if l0.is_finite() {
            Ok(format!("L0 ≈ {l0:.6}"))
        } else {
            Err(format!("estimate is {l0}"))
        },
    );

    let problem = cfg.problem();
    let (nx, ny) = match (cfg.command, cfg.mesh_list.iter().max()) {
        (Command::SpatialStudy, Some(&m)) => m,
        _ => (cfg.nx, cfg.ny),
    };
    let mut shift = f64::NAN;
    let mut compensated = drift.clone();
    match problem.discretize(nx, ny) {
        Ok(disc) => {
            shift = disc.shift;
            compensated = disc.drift.clone();
            let c = &disc.coercivity;
            push(
                "operator is elliptic and coercive after the shift",
                if c.converged() {
                    Ok(format!(
                        "smallest symmetric eigenvalue {:.6e} on {nx}x{ny}, shift c0 = {shift}",
                        c.lambda_min_sym
                    ))
                } else {
                    Err("coercivity estimate did not converge".into())
                },
            );
            if c.converged() && shift < c.required_c0 {
                push(
                    "shift covers the coercivity defect",
                    Err(format!("c0 = {shift} < required {:.6e}", c.required_c0)),
                );
            }
        }
        Err(e) => push("operator is elliptic and coercive after the shift", Err(e.to_string())),
    }

    let mut trace_check = None;
    push(
        "noise covariance has finite weighted trace",
        match cfg.noise_spec() {
            Ok(Some(spec)) => {
                trace_check = Some(spec.trace_check);
                if spec.trace_check.is_finite() {
                    Ok(format!("trace_check = {:.6e} over {} modes per axis", spec.trace_check, cfg.modes))
                } else {
                    Err(format!("trace_check = {}", spec.trace_check))
                }
            }
            Ok(None) => Ok("noise disabled".into()),
            Err(e) => Err(e.to_string()),
        },
    );

    let stepper = cfg.stepper_config();
    let guard: Result<Vec<String>, String> = cfg
        .time_steps()
        .into_iter()
        .map(|dt| {
            stepper
                .with_dt(dt)
                .check(&compensated)
                .map(|_| format!("{dt:?}"))
                .map_err(|e| e.to_string())
        })
        .collect();
    push(
        "time step satisfies dt * L0 < 1",
        guard.map(|dts| format!("dt in {{{}}}", dts.join(", "))),
    );

    let grid = match cfg.command {
        Command::TemporalStudy => cfg
            .temporal_study()
            .map_err(|e| e.to_string())
            .and_then(|s| s.check().map_err(|e| e.to_string()))
            .map(|_| "every dt is a multiple of the reference dt".to_string()),
        Command::SpatialStudy => cfg
            .spatial_study()
            .map_err(|e| e.to_string())
            .and_then(|s| s.check().map_err(|e| e.to_string()))
            .map(|_| "meshes are nested".to_string()),
        _ => step_count(cfg.t_final, cfg.dt)
            .map(|n| format!("{n} steps"))
            .map_err(|e| e.to_string()),
    };
    push("time and space grids are compatible", grid);

    ValidationReport {
        checks,
        l0,
        shift,
        trace_check,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = parse_config_str("command = validate\n", &[]).unwrap();
        assert_eq!(cfg.command, Command::Validate);
        let mut expected = RunConfig::default();
        expected.resolve();
        assert_eq!(cfg.to_ini(), expected.to_ini());
        assert_eq!(cfg.study_dt, 1e-3);
    }

    #[test]
    fn phi_key_builds_quintic() {
        let cfg = parse_config_str("phi = 0,1,0,0,0,-1", &[]).unwrap();
        assert_eq!(cfg.drift(), DriftPolynomial::allen_cahn_quintic());
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        let err = parse_config_str("[noise]\nbeta = -1\n", &[]).unwrap_err();
        assert!(matches!(&err, ConfigError::Value { key, origin, .. } if key == "noise.beta" && origin == "line 2"));
        let err = parse_config_str("# comment\nnoise.gamma = 1\n", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
        let err = parse_config_str("just words\n", &[]).unwrap_err();
        assert_eq!(
            err,
            ConfigError::Syntax {
                line: 1,
                message: "expected `key = value`, got `just words`".into()
            }
        );
        assert!(parse_config_str("", &["dt".into()]).is_err());
    }

    #[test]
    fn sections_fractions_and_overrides() {
        let text = "dt = 1/128\n[study]\ndt_list = 1/16, 1/32 # coarse\nreference_mesh = exact\n[mesh]\nnx = 8\nmesh.ny = 4\n";
        let cfg = parse_config_str(text, &["mesh.nx=16".into(), "scheme = semi_implicit".into()]).unwrap();
        assert_eq!(cfg.dt, 1.0 / 128.0);
        assert_eq!(cfg.dt_list, vec![0.0625, 0.03125]);
        assert_eq!(cfg.reference_mesh, SpatialReference::Exact);
        assert_eq!((cfg.nx, cfg.ny), (16, 4));
        assert_eq!(cfg.scheme, Scheme::SemiImplicit);
        assert!(cfg.is_set("mesh.ny") && !cfg.is_set("seed"));
    }

    #[test]
    fn echo_round_trips() {
        let overrides: Vec<String> = [
            "operator.diffusion=1,0.1,2",
            "operator.velocity=uniform:-1,0.5",
            "operator.garding_shift=0.3",
            "boundary.dirichlet=left,top",
            "problem.initial=cosine",
            "study.mesh_list=4,8x4",
            "study.dt=0.1/3",
            "linear.method=krylov",
            "noise.enabled=false",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let cfg = parse_config_str("", &overrides).unwrap();
        let again = parse_config_str(&cfg.to_ini(), &[]).unwrap();
        assert_eq!(again.to_ini(), cfg.to_ini());
        let mut a = again.clone();
        let mut b = cfg.clone();
        a.explicit.clear();
        b.explicit.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn default_configuration_validates() {
        let cfg = parse_config_str("mesh.nx = 8\nmesh.ny = 8\nnoise.modes = 16", &[]).unwrap();
        let report = validate(&cfg);
        assert!(report.passed(), "{}", report.render());
        assert!((report.l0 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn cubic_with_positive_leading_coefficient_fails() {
        let cfg = parse_config_str("phi = 0,0,0,1\nmesh.nx = 4\nmesh.ny = 4\nnoise.modes = 4", &[]).unwrap();
        let report = validate(&cfg);
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name.contains("odd")));
    }

    #[test]
    fn large_time_step_trips_the_guard() {
        let cfg = parse_config_str("dt = 1\nphi = 0,2\nmesh.nx = 4\nmesh.ny = 4\nnoise.modes = 4", &[]).unwrap();
        let report = validate(&cfg);
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["time step satisfies dt * L0 < 1"]);
    }

    #[test]
    fn heat_configuration_has_exact_solution() {
        let cfg = parse_config_str(
            "phi =\nboundary.dirichlet = none\noperator.diffusion = 1\noperator.velocity = zero\nproblem.initial = cosine\nnoise.enabled = false\n",
            &[],
        )
        .unwrap();
        let p = cfg.problem();
        let exact = p.exact.expect("closed form");
        let reference = ProblemSpec::heat_benchmark(0.1).exact.unwrap();
        assert!((exact(0.3, 0.7, 0.1) - reference(0.3, 0.7, 0.1)).abs() < 1e-15);
    }
}
