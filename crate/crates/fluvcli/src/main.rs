use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluvcli::commands::{
    cell_size, cmd_ablate, cmd_extrapolate, cmd_generate, cmd_interpolate, cmd_report, cmd_synth, cmd_train, cmd_validate,
    run_data_config, ExtrapolateArgs, GenerateArgs, InterpolateArgs, ValidateArgs,
};
use fluvcli::{resolve, CliError, DataConfig, Overrides, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fluvcli", version, about = "Train and evaluate 3-D GANs on fluvial reservoir volumes")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 for bitwise-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// `synth`, `synth-facies` or a directory of FLVD volumes.
    #[arg(long)]
    data: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator and discriminator.
    Train {
        /// Architecture preset, arch0 to arch8.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        g_iters: Option<u64>,
        #[command(flatten)]
        data: DataArg,
        /// Continue from a checkpoint of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Record elapsed seconds in the metrics.
        #[arg(long)]
        wall_time: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Write unfiltered samples of a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Also render mid slices.
        #[arg(long)]
        png: bool,
    },
    /// Score generated samples against the held-out realizations.
    Validate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[command(flatten)]
        data: DataArg,
        /// Reference crops at both lateral extremities.
        #[arg(long)]
        extremity: bool,
        /// Report the nearest training sample of each generated sample.
        #[arg(long)]
        nearest: bool,
        #[arg(long, default_value_t = 32)]
        mds_items: usize,
    },
    /// Sample a grid between four corner latents.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seeds of the corners z00,z01,z10,z11.
        #[arg(long, value_delimiter = ',', num_args = 4, required = true)]
        corners: Vec<u64>,
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long)]
        spherical: bool,
        #[arg(long)]
        png: bool,
    },
    /// Sample from an enlarged latent grid.
    Extrapolate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Latent cells added along x,y,z.
        #[arg(long, value_delimiter = ',', num_args = 3, required = true)]
        extra: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long)]
        png: bool,
    },
    /// Train several presets with repeated seeds.
    Ablate {
        #[arg(long, value_delimiter = ',', required = true)]
        presets: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        g_iters: Option<u64>,
        #[command(flatten)]
        data: DataArg,
    },
    /// Write procedural realizations as FLVD files.
    Synth {
        #[arg(long)]
        count: usize,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Generated samples to render.
        #[arg(long, default_value_t = 4)]
        samples: usize,
    },
}

fn read_doc(path: &Option<PathBuf>) -> Result<Option<String>> {
    path.as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))))
        .transpose()
}

fn echo(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

/// Data section from `--config`, else from the run that wrote `checkpoint`.
fn data_for(doc: &Option<String>, checkpoint: &Path, spec: &Option<String>) -> Result<DataConfig> {
    let ov = Overrides { data: spec.clone(), ..Default::default() };
    if doc.is_some() {
        return Ok(resolve(doc.as_deref(), &ov)?.data);
    }
    let mut d = run_data_config(checkpoint).unwrap_or_default();
    if spec.is_some() {
        let json = serde_json::json!({ "data": d }).to_string();
        d = resolve(Some(&json), &ov)?.data;
    }
    Ok(d)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let doc = read_doc(&cli.config)?;
    let seed = cli.seed.unwrap_or(0);
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Train { preset, g_iters, data, resume, wall_time, quiet } => {
            let ov = Overrides { preset, seed: cli.seed, out: cli.out.clone(), g_iters, data: data.data, wall_time };
            let cfg = resolve(doc.as_deref(), &ov)?;
            echo(&cfg);
            let t = cmd_train(&cfg, resume.as_deref(), !quiet)?;
            eprintln!("{} metric rows in {}", t.rows.len(), t.run_dir.display());
        }
        Command::Generate { checkpoint, count, png } => {
            let data = data_for(&doc, &checkpoint, &None)?;
            let a = GenerateArgs { cell_size: cell_size(&data), checkpoint, count, seed, out: out("samples"), png };
            echo(&a);
            cmd_generate(&a)?;
        }
        Command::Validate { checkpoint, count, data, extremity, nearest, mds_items } => {
            let data = data_for(&doc, &checkpoint, &data.data)?;
            let a = ValidateArgs { checkpoint, data, count, seed, out: out("validation"), extremity, nearest, mds_items };
            echo(&a);
            let r = cmd_validate(&a)?;
            eprintln!("d_W {} over {} reference samples", r.d_w.mean, r.reference);
        }
        Command::Interpolate { checkpoint, corners, grid, spherical, png } => {
            let data = data_for(&doc, &checkpoint, &None)?;
            let corners = [corners[0], corners[1], corners[2], corners[3]];
            let a = InterpolateArgs { cell_size: cell_size(&data), checkpoint, corners, grid, spherical, out: out("interpolation"), png };
            echo(&a);
            cmd_interpolate(&a)?;
        }
        Command::Extrapolate { checkpoint, extra, count, png } => {
            let data = data_for(&doc, &checkpoint, &None)?;
            let extra = [extra[0], extra[1], extra[2]];
            let a = ExtrapolateArgs { cell_size: cell_size(&data), checkpoint, extra, seed, count, out: out("extrapolation"), png };
            echo(&a);
            let (_, r) = cmd_extrapolate(&a)?;
            eprintln!("output shape {:?}", r.output_shape);
        }
        Command::Ablate { presets, repeats, g_iters, data } => {
            let ov = Overrides { seed: cli.seed, out: Some(out("ablation")), g_iters, data: data.data, ..Default::default() };
            let rows = cmd_ablate(doc.as_deref(), &ov, &presets, repeats)?;
            echo(&rows);
        }
        Command::Synth { count } => {
            let cfg = resolve(doc.as_deref(), &Overrides { seed: cli.seed, ..Default::default() })?;
            let dir = out("synth");
            echo(&serde_json::json!({ "data": cfg.data, "count": count, "out": dir }));
            cmd_synth(&cfg.data, count, &dir)?;
        }
        Command::Report { run, samples } => {
            let dir = cli.out.clone().unwrap_or_else(|| run.join("report"));
            echo(&serde_json::json!({ "run": run, "samples": samples, "seed": seed, "out": dir }));
            cmd_report(&run, &dir, samples, seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
