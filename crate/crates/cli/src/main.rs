use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cotex_cli::{cmd_analyze_variance, cmd_detect_conflicts, cmd_render, cmd_texture, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "cotex", version, about = "Multi-view texture fusion experiments on triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Write color, depth and view-score PNGs for every ring view.
    Render(RunArgs),
    /// Denoise, aggregate, detect conflicts and refine; writes PLY, PNG, CSV and JSON.
    Texture(RunArgs),
    /// Compare the foreground std trajectory of the three fusion policies.
    AnalyzeVariance(RunArgs),
    /// Flag vertices whose colors disagree across views.
    DetectConflicts(RunArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, name) = match &cli.command {
        Command::Render(a) => (a, "render"),
        Command::Texture(a) => (a, "texture"),
        Command::AnalyzeVariance(a) => (a, "analyze-variance"),
        Command::DetectConflicts(a) => (a, "detect-conflicts"),
    };
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    log::info!("{name}: writing to {}", cfg.out_dir.display());
    match cli.command {
        Command::Render(_) => {
            let s = cmd_render(&cfg)?;
            println!("wrote {} images to {}", s.files.len(), cfg.out_dir.display());
        }
        Command::Texture(_) => {
            let s = cmd_texture(&cfg)?;
            println!(
                "fusion steps {}, flagged vertices {}, residual flags {}",
                s.fusion_steps, s.flagged, s.residual
            );
            for (stage, t) in &s.timings {
                println!("  {stage:<10} {:>8.2} s", t.as_secs_f64());
            }
        }
        Command::AnalyzeVariance(_) => {
            let s = cmd_analyze_variance(&cfg)?;
            println!(
                "uncorrected ≤ baseline on {:.1}% of {} fusion steps; final corrected/baseline gap {:.2}%",
                100.0 * s.below_baseline,
                s.fusion_steps,
                100.0 * s.final_gap
            );
            println!("  elapsed {:.2} s", s.elapsed.as_secs_f64());
        }
        Command::DetectConflicts(_) => {
            let s = cmd_detect_conflicts(&cfg)?;
            println!("flagged {} of {} visible vertices", s.flagged, s.visible);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
