//! `reach` — reachtube construction and analysis from the command line.

use clap::{Args, Parser, Subcommand};
use reachtube::harness::{
    audit, compare, pareto, plot_tube, run_engine, EngineKind, RunConfig, TubeArtifact,
};
use reachtube::Result;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "reach",
    about = "Reachtube construction for nonlinear ODEs and continuous-depth models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides [output].dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic reachtube (optimal-metric ellipsoids + interval boxes).
    Lrtng(RunArgs),
    /// Statistical reachtube via Lipschitz caps.
    Gotube(RunArgs),
    /// Statistical reachtube via interval Lipschitz bounds.
    Slr(RunArgs),
    /// Fresh-sample containment audit of a stored tube.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Path to the `.tube` artifact.
        #[arg(long)]
        tube: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Volume/runtime comparison of artifacts over the same setting.
    Compare {
        /// Paths to `.tube` artifacts (at least two).
        tubes: Vec<PathBuf>,
    },
    /// Tightness sweep: runtime and normalized volume per mu.
    Pareto {
        #[arg(long)]
        config: PathBuf,
        /// Ascending list of tightness factors.
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// Seed family; medians are reported.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG projection of a stored tube.
    Plot {
        /// Path to the `.tube` artifact.
        #[arg(long)]
        tube: PathBuf,
        /// Two state coordinates "i,j" to project on.
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        dims: Vec<usize>,
        /// Overlay this many sampled trajectories (requires --config).
        #[arg(long)]
        overlay_samples: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output SVG path; defaults next to the artifact.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("REACH_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn run(args: &RunArgs, kind: EngineKind) -> Result<ExitCode> {
    let cfg = load_config(&args.config, args.seed)?;
    if cfg.engine_kind() != kind {
        return Err(reachtube::ReachError::Config(format!(
            "config declares engine '{}', but the '{kind}' subcommand was invoked",
            cfg.engine_kind()
        )));
    }
    let artifact = run_engine(&cfg)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir())
        .unwrap_or_else(|| PathBuf::from("."));
    let name = cfg.output_name();
    let tube_path = artifact.write(&dir, &name)?;
    println!(
        "wrote {} ({} steps, mean volume {:.6e})",
        tube_path.display(),
        artifact.steps.len(),
        artifact.metadata.mean_volume
    );
    if let Some(t) = artifact.metadata.blowup_time {
        eprintln!("blowup at t = {t}; artifact is partial");
        return Ok(ExitCode::from(2));
    }
    if let Some(to) = &artifact.metadata.timeout {
        eprintln!(
            "confidence timeout: reached {:.6} of target {:.6} with {} samples; artifact is partial",
            to.achieved, to.target, to.samples
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main_inner() -> Result<ExitCode> {
    init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Lrtng(args) => run(&args, EngineKind::Lrtng),
        Command::Gotube(args) => run(&args, EngineKind::Gotube),
        Command::Slr(args) => run(&args, EngineKind::Slr),
        Command::Audit {
            config,
            tube,
            trials,
            seed,
        } => {
            let cfg = load_config(&config, None)?;
            let artifact = TubeArtifact::read(&tube)?;
            let outcome = audit(&artifact, &cfg, trials, seed)?;
            println!(
                "audited {} steps with {} fresh trials: {} violation(s)",
                outcome.steps_checked, outcome.trials, outcome.violations
            );
            Ok(if outcome.clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            })
        }
        Command::Compare { tubes } => {
            let paths: Vec<&Path> = tubes.iter().map(|p| p.as_path()).collect();
            let table = compare(&paths)?;
            print!("{}", table.render_text());
            println!(
                "{}",
                serde_json::to_string(&table)
                    .map_err(|e| reachtube::ReachError::Config(e.to_string()))?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Pareto {
            config,
            mu,
            seeds,
            out,
        } => {
            let cfg = load_config(&config, None)?;
            let points = pareto(&cfg, &mu, &seeds)?;
            let mut csv = String::from("mu,runtime_seconds,mean_volume,normalized_volume\n");
            for p in &points {
                println!(
                    "mu = {:<6} runtime = {:>9.3}s volume = {:.6e} normalized = {:.4}",
                    p.mu, p.runtime_seconds, p.mean_volume, p.normalized_volume
                );
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    p.mu, p.runtime_seconds, p.mean_volume, p.normalized_volume
                ));
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("pareto.csv"), csv)?;
                std::fs::write(dir.join("pareto.svg"), pareto_svg(&points))?;
                println!("wrote {}", dir.join("pareto.csv").display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot {
            tube,
            dims,
            overlay_samples,
            config,
            out,
        } => {
            if dims.len() != 2 {
                return Err(reachtube::ReachError::InvalidInput(
                    "--dims takes exactly two comma-separated indices".into(),
                ));
            }
            let artifact = TubeArtifact::read(&tube)?;
            let cfg = config.map(|p| load_config(&p, None)).transpose()?;
            let overlay = match (&cfg, overlay_samples) {
                (Some(c), Some(n)) => Some((c, n)),
                (None, Some(_)) => {
                    return Err(reachtube::ReachError::InvalidInput(
                        "--overlay-samples requires --config".into(),
                    ))
                }
                _ => None,
            };
            let svg = plot_tube(&artifact, (dims[0], dims[1]), overlay)?;
            let path = out.unwrap_or_else(|| tube.with_extension("svg"));
            std::fs::write(&path, svg)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn pareto_svg(points: &[reachtube::harness::ParetoPoint]) -> String {
    use std::fmt::Write as _;
    let (w, h, m) = (640.0, 480.0, 50.0);
    let rt_max = points
        .iter()
        .map(|p| p.runtime_seconds)
        .fold(1e-9f64, f64::max);
    let nv_max = points
        .iter()
        .map(|p| p.normalized_volume)
        .fold(1.0f64, f64::max);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{m}" y="24" font-family="monospace" font-size="13">runtime [s] vs normalized volume</text>"#
    )
    .unwrap();
    let mut path = Vec::new();
    for p in points {
        let x = m + (p.runtime_seconds / rt_max) * (w - 2.0 * m);
        let y = h - m - (p.normalized_volume / nv_max) * (h - 2.0 * m);
        path.push(format!("{x:.2},{y:.2}"));
        writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="#004080"/>"##).unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11">mu={}</text>"#,
            x + 6.0,
            y - 6.0,
            p.mu
        )
        .unwrap();
    }
    writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#004080" stroke-width="1"/>"##,
        path.join(" ")
    )
    .unwrap();
    writeln!(svg, "</svg>").unwrap();
    svg
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
