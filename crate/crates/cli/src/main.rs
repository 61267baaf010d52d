use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hyperscope::realspace::TestFunction;
use hyperscope_cli::config::{AnalysisSpec, Expect, RadiusGrid, RunConfig, WindowSpec};
use hyperscope_cli::tools::{self, OracleCluster};
use hyperscope_cli::{run, CliError};

#[derive(Parser)]
#[command(name = "hyperscope", version, about = "Synthesize and analyze hyperuniform point processes")]
struct Cli {
    /// Worker threads (default: HYPERSCOPE_WORKERS, else all cores). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sf,
    Var,
    Stealth,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestFn {
    Ball,
    Cube,
    SmoothBump,
}

#[derive(Subcommand)]
enum Command {
    /// Write point samples and a manifest from a run config (or a manifest).
    Generate {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate S(k), a variance curve or the stealth probe from point files.
    Analyze {
        #[arg(value_enum)]
        kind: Kind,
        /// Point files or directories of `points-*` files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output prefix: writes PREFIX.csv and PREFIX.fit.json.
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value_t = 6.0)]
        k_max: f64,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        /// Keep modes at Bragg positions.
        #[arg(long)]
        keep_bragg: bool,
        /// Fit window `LO,HI`; for sf the default is the bins 10x above the noise floor.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "ball")]
        test_function: TestFn,
        /// Radius grid `FROM,TO,COUNT` (log-spaced).
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = 16)]
        centers: usize,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        eps: f64,
    },
    /// Generate, analyze and report in one streaming pass.
    Pipeline {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a design: `circle:N`, a bundled name, or a JSON record file.
    VerifyDesign {
        design: String,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Print analytic oracle tables as CSV.
    Oracle {
        #[command(subcommand)]
        table: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Spectral density of the zeta(s) renewal process.
    Renewal {
        #[arg(long, default_value_t = 2.5)]
        s: f64,
        #[arg(long, default_value_t = 0.1)]
        k_min: f64,
        #[arg(long, default_value_t = 3.0)]
        k_max: f64,
        #[arg(long, default_value_t = 30)]
        count: usize,
    },
    /// Cluster process spectrum: `circle:N` or `gaussian:SIGMA[:COUNT]`.
    Cluster {
        cluster: OracleCluster,
        /// Progenitor Z^d + U (off-Bragg part) instead of Poisson.
        #[arg(long)]
        lattice: bool,
        #[arg(long, default_value_t = 0.1)]
        k_min: f64,
        #[arg(long, default_value_t = 3.0)]
        k_max: f64,
        #[arg(long, default_value_t = 30)]
        count: usize,
    },
    /// Moments of the uniform law on the unit sphere.
    Sphere {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        degree: usize,
    },
}

fn load(path: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn pair(v: &Option<Vec<f64>>) -> Result<Option<[f64; 2]>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some([a, b]) => Ok(Some([*a, *b])),
        Some(_) => Err(CliError::config("--window takes LO,HI")),
    }
}

fn analysis_spec(cmd: &Command) -> Result<AnalysisSpec, CliError> {
    let Command::Analyze {
        kind,
        k_max,
        bin_width,
        keep_bragg,
        window,
        test_function,
        radii,
        centers,
        eps,
        ..
    } = cmd
    else {
        unreachable!()
    };
    Ok(match kind {
        Kind::Sf => AnalysisSpec::Sf {
            k_max: *k_max,
            bin_width: *bin_width,
            exclude_bragg: !keep_bragg,
            window: match pair(window)? {
                Some(w) => WindowSpec::Fixed(w),
                None => WindowSpec::AboveFloor {
                    floor_factor: 10.0,
                    k_cap: *k_max,
                },
            },
            expect: Expect::default(),
        },
        Kind::Var => {
            let r = match radii.as_deref() {
                Some(r @ [_, _, _]) => r,
                _ => return Err(CliError::config("var needs --radii FROM,TO,COUNT")),
            };
            let grid = RadiusGrid::Range {
                from: r[0],
                to: r[1],
                count: r[2] as usize,
                log: true,
            };
            AnalysisSpec::Var {
                test_function: match test_function {
                    TestFn::Ball => TestFunction::BallIndicator,
                    TestFn::Cube => TestFunction::CubeIndicator,
                    TestFn::SmoothBump => TestFunction::SmoothBump,
                },
                window: pair(window)?.unwrap_or([r[0], r[1]]),
                radii: grid,
                centers: *centers,
                center_seed: 0,
                expect: Expect::default(),
            }
        }
        Kind::Stealth => AnalysisSpec::Stealth {
            eps: *eps,
            expect: Expect::default(),
        },
    })
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate { config, out } => {
            let cfg = load(config, out.clone())?;
            let m = run::generate(&cfg, cli.workers)?;
            eprintln!("{} files in {:.2}s", m.outputs.len(), m.wall_time_s);
            println!("{}", cfg.output_dir.join("manifest.json").display());
        }
        Command::Pipeline { config, out } => {
            let cfg = load(config, out.clone())?;
            let (report, _) = run::pipeline(&cfg, cli.workers)?;
            for a in &report.analyses {
                let verdict = match (&a.error, a.pass) {
                    (Some(e), _) => format!("ERROR {e}"),
                    (None, Some(true)) => "pass".into(),
                    (None, Some(false)) => "FAIL".into(),
                    (None, None) => "no expectation".into(),
                };
                let exp = a.fit.map(|f| format!(" exponent {:.3}", f.exponent)).unwrap_or_default();
                let val = a.stealth.map(|s| format!(" value {:.3e}", s.value)).unwrap_or_default();
                eprintln!("analysis {} ({}):{exp}{val} {verdict}", a.index, a.kind);
            }
            println!("{}", cfg.output_dir.join("report.json").display());
            if report.analyses.iter().any(|a| a.error.is_some()) {
                return Err(CliError::analysis("one or more analyses failed"));
            }
        }
        cmd @ Command::Analyze { inputs, out, svg, .. } => {
            let spec = analysis_spec(cmd)?;
            let (fin, files) = run::analyze(spec, inputs, out, *svg, cli.workers)?;
            if let Some(f) = fin.fit {
                print_json(&f);
            }
            if let Some(s) = fin.stealth {
                print_json(&s);
            }
            for f in files {
                eprintln!("{} {}", f.sha256, f.path);
            }
        }
        Command::VerifyDesign { design, order, tol } => {
            let check = tools::verify(design, *order, *tol)?;
            print_json(&check);
            if !check.report.pass {
                return Err(CliError::analysis(format!(
                    "max mismatch {:.3e} exceeds {:.1e}",
                    check.report.max_mismatch, tol
                )));
            }
        }
        Command::Oracle { table } => {
            let text = match table {
                Oracle::Renewal { s, k_min, k_max, count } => tools::renewal_table(*s, *k_min, *k_max, *count)?,
                Oracle::Cluster {
                    cluster,
                    lattice,
                    k_min,
                    k_max,
                    count,
                } => tools::cluster_table(*cluster, *lattice, *k_min, *k_max, *count)?,
                Oracle::Sphere { d, degree } => tools::sphere_table(*d, *degree)?,
            };
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hyperscope: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
