use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use spde_core::config::{parse_config, parse_config_str, validate, Command, ConfigError, RunConfig};
use spde_core::experiment::{emit_report, run_spatial_study, run_temporal_study, StudyError};
use spde_core::fem::{assemble_mass, assemble_stiffness, FemError};
use spde_core::linalg::SparseMatrix;
use spde_core::mesh::MeshError;
use spde_core::noise::{sample_path, NoiseError, NoiseEvaluator};
use spde_core::stepper::{solve_path, step_count, StepError};

#[derive(Parser, Debug)]
#[command(name = "spde", about = "Finite element solver and convergence studies for stochastic reaction-diffusion equations")]
struct Cli {
    /// solve, temporal-study, spatial-study, validate or mesh-dump; overrides
    /// the `command` key
    command: Option<String>,
    /// INI configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set mesh.nx=16` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (falls back to the config, then SPDE_SEED)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// mesh-dump: also write mass and stiffness triplets
    #[arg(long)]
    matrices: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<StepError> for Failure {
    fn from(e: StepError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<NoiseError> for Failure {
    fn from(e: NoiseError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<FemError> for Failure {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Linalg(_) => Failure::Numerical(e.to_string()),
            FemError::Mesh(m) => m.into(),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Sample { ref source, .. } if source.is_numerical() => Failure::Numerical(e.to_string()),
            StudyError::Step(s) => s.into(),
            StudyError::Fem(f) => f.into(),
            StudyError::Io(_) | StudyError::Report(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut overrides = cli.overrides.clone();
    if let Some(c) = &cli.command {
        overrides.push(format!("command={c}"));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("out_dir={}", o.display()));
    }
    let parse = |overrides: &[String]| match &cli.config {
        Some(path) => parse_config(path, overrides),
        None => parse_config_str("", overrides),
    };
    let cfg = parse(&overrides)?;
    if !cfg.is_set("seed") {
        if let Ok(env) = std::env::var("SPDE_SEED") {
            overrides.insert(0, format!("seed={}", env.trim()));
            return Ok(parse(&overrides)?);
        }
    }
    Ok(cfg)
}

fn write_echo(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.echo.ini"), cfg.to_ini())?;
    Ok(())
}

fn check(cfg: &RunConfig) -> Result<(), Failure> {
    let report = validate(cfg);
    if report.passed() {
        return Ok(());
    }
    let mut msg = String::from("configuration violates:");
    for c in report.failures() {
        let _ = write!(msg, "\n  {}: {}", c.name, c.detail);
    }
    Err(Failure::Config(msg))
}

fn write_triplets(path: &Path, m: &SparseMatrix) -> std::io::Result<()> {
    let mut s = String::from("row,col,value\n");
    for (i, j, v) in m.triplets() {
        let _ = writeln!(s, "{i},{j},{v:?}");
    }
    std::fs::write(path, s)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(cli)?;
    let out = PathBuf::from(&cfg.out_dir);
    match cfg.command {
        Command::Validate => {
            let report = validate(&cfg);
            print!("{}", report.render());
            if !report.passed() {
                return Err(Failure::Config("validation failed".into()));
            }
        }
        Command::MeshDump => {
            let problem = cfg.problem();
            let mesh = problem.mesh(cfg.nx, cfg.ny)?;
            mesh.write_csv(&out)?;
            if cli.matrices {
                write_triplets(&out.join("mass.csv"), &assemble_mass(&mesh)?)?;
                write_triplets(&out.join("stiffness.csv"), &assemble_stiffness(&mesh, &problem.operator)?)?;
            }
            write_echo(&cfg, &out)?;
            println!(
                "{} nodes, {} triangles written to {}",
                mesh.node_count(),
                mesh.triangle_count(),
                out.display()
            );
        }
        Command::Solve => {
            check(&cfg)?;
            let problem = cfg.problem();
            let disc = problem.discretize(cfg.nx, cfg.ny)?;
            let n_steps = step_count(problem.t_final, cfg.dt)?;
            let spec = cfg.noise_spec()?;
            let eval = spec.as_ref().map(|s| NoiseEvaluator::new(s, &disc.mesh)).transpose()?;
            let path = spec
                .as_ref()
                .map(|s| sample_path(s, n_steps, cfg.dt, cfg.seed, cfg.solve_sample))
                .transpose()?;
            let sol = solve_path(&problem, &disc, eval.as_ref().zip(path.as_ref()), &cfg.stepper_config())?;
            std::fs::create_dir_all(&out)?;
            let mut csv = String::from("node,x,y,value\n");
            for (n, p) in disc.mesh.nodes.iter().enumerate() {
                let _ = writeln!(csv, "{n},{:?},{:?},{:?}", p[0], p[1], sol.terminal[n]);
            }
            std::fs::write(out.join("terminal.csv"), csv)?;
            write_echo(&cfg, &out)?;
            println!(
                "{} steps, {} Newton iterations (max {} per step), max |X| = {:.6}, terminal written to {}",
                sol.step_count,
                sol.newton_iterations_total,
                sol.newton_iterations_max,
                sol.max_abs,
                out.join("terminal.csv").display()
            );
        }
        Command::TemporalStudy | Command::SpatialStudy => {
            check(&cfg)?;
            let mut report = if cfg.command == Command::TemporalStudy {
                run_temporal_study(&cfg.temporal_study()?)?
            } else {
                run_spatial_study(&cfg.spatial_study()?)?
            };
            report.config_echo = cfg.to_ini();
            emit_report(&report, &out)?;
            write_echo(&cfg, &out)?;
            for s in &report.schemes {
                println!("{}: fitted order {:.4}", s.scheme.name(), s.fitted_order);
            }
            println!("report written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
