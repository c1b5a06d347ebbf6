//! Command-line surface: reproducible batch experiments over the wave
//! benchmark. Machine-readable results go to files; progress and errors go
//! to standard error.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavelab::checkpoint;
use wavelab::error::{Error, Result};
use wavelab::eval::{evaluate, EvalConfig, Induction};
use wavelab::manifest::{prepare_out_dir, DirLock, RunManifest};
use wavelab::model::ModelKind;
use wavelab::pgm;
use wavelab::report;
use wavelab::train::{sweep_csv, sweep_snr, train_multi, NoiseMode, TrainConfig};
use wavelab::tuning::AtConfig;
use wavelab::wavd;
use wavelab::wave::{make_dataset, Sequence, WaveConfig};

const OUT_ROOT_ENV: &str = "WAVELAB_OUT";

#[derive(Parser)]
#[command(name = "wavelab", version, about = "2D wave prediction and denoising lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate clean wave sequences as WAVD files.
    Gen(GenArgs),
    /// Train a model on noisy data; multiple SNRs run as a sweep.
    Train(TrainArgs),
    /// Evaluate a checkpoint: induction plus closed-loop rollout, DTW-scored.
    Eval(EvalArgs),
    /// Merge run tables and render frame strips.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of sequences.
    #[arg(long, default_value_t = 100)]
    sequences: usize,
    /// Frames per sequence.
    #[arg(long, default_value_t = 40)]
    length: usize,
    /// Square grid edge length.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// distana4 | distana24 | convlstm2 | convlstm8 | tcn121 | tcn191
    #[arg(long)]
    model: Option<String>,
    /// Training SNR; a comma-separated list runs an SNR sweep.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Number of random-seed repetitions.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// fresh (redraw noise per epoch) or fixed.
    #[arg(long)]
    noise_mode: Option<String>,
    /// Directory of WAVD training sequences.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text key=value defaults; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// tf | at
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    test_snr: Option<f64>,
    /// Tuning rate (required in at mode).
    #[arg(long)]
    eta: Option<f64>,
    /// History length (required in at mode).
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    induction: Option<usize>,
    #[arg(long)]
    closed_loop: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training SNR label echoed into the report.
    #[arg(long)]
    train_snr: Option<f64>,
    /// Directory of WAVD test sequences.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-sequence clean/noisy/rollout WAVD dumps.
    #[arg(long)]
    dump_frames: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to aggregate.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Render a frame strip at this rollout time step (needs dumped frames).
    #[arg(long)]
    strip_step: Option<usize>,
    /// Which test sequence the strip shows.
    #[arg(long, default_value_t = 0)]
    strip_seq: usize,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// `key=value` per line; `#` starts a comment.
fn load_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (lineno, line) in fs::read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected key=value, got `{line}`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn fill<T: std::str::FromStr>(
    flag: Option<T>,
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Format(format!("config key `{key}`: cannot parse `{raw}`"))),
        None => Ok(None),
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidConfig(format!("missing required --{what}")))
}

fn resolve_out(out: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    if let Some(out) = out {
        return Ok(out);
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => Ok(PathBuf::from(root).join(default_name)),
        None => Err(Error::InvalidConfig(format!(
            "no --out given and {OUT_ROOT_ENV} is not set"
        ))),
    }
}

fn load_dataset(dir: &Path) -> Result<(Vec<PathBuf>, Vec<Sequence>)> {
    let files = report::wavd_files_in(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no .wavd files in {}",
            dir.display()
        )));
    }
    let mut sequences = Vec::with_capacity(files.len());
    for f in &files {
        sequences.push(wavd::read_sequence_file(f)?);
    }
    Ok((files, sequences))
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let out = resolve_out(args.out, "gen")?;
    prepare_out_dir(&out, args.force)?;
    let _lock = DirLock::acquire(&out)?;

    let template = WaveConfig {
        height: args.grid,
        width: args.grid,
        steps: args.length,
        ..WaveConfig::default()
    };
    let sequences = make_dataset(args.sequences, &template, args.seed)?;

    let mut manifest = RunManifest::new("gen", env!("CARGO_PKG_VERSION"));
    manifest.set("sequences", args.sequences);
    manifest.set("length", args.length);
    manifest.set("grid", args.grid);
    manifest.set("seed", args.seed);
    for (i, seq) in sequences.iter().enumerate() {
        let name = format!("seq_{i:03}.wavd");
        wavd::write_sequence_file(out.join(&name), seq)?;
        manifest.add_output(&out, &name)?;
    }
    manifest.write(&out)?;
    eprintln!(
        "gen: wrote {} sequences ({}x{}x{}) to {}",
        args.sequences,
        args.length,
        args.grid,
        args.grid,
        out.display()
    );
    Ok(())
}

fn parse_noise_mode(raw: Option<String>) -> Result<NoiseMode> {
    match raw.as_deref() {
        None | Some("fresh") => Ok(NoiseMode::FreshPerEpoch),
        Some("fixed") => Ok(NoiseMode::FixedPerDataset),
        Some(other) => Err(Error::InvalidConfig(format!(
            "--noise-mode must be fresh or fixed, got `{other}`"
        ))),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => HashMap::new(),
    };
    let model_name: String = require(fill(args.model, &file, "model")?, "model")?;
    let kind = ModelKind::parse(&model_name)?;
    let snr_raw: String = require(fill(args.snr, &file, "snr")?, "snr")?;
    let snrs: Vec<f64> = snr_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad SNR `{s}`")))
        })
        .collect::<Result<_>>()?;
    let data_dir: PathBuf = require(fill(args.data, &file, "data")?, "data")?;
    let out = resolve_out(fill(args.out, &file, "out")?, &format!("train-{model_name}"))?;
    let config = TrainConfig {
        epochs: fill(args.epochs, &file, "epochs")?.unwrap_or(200),
        lr: fill(args.lr, &file, "lr")?.unwrap_or(0.001),
        train_snr: snrs[0],
        n_seeds: fill(args.seeds, &file, "seeds")?.unwrap_or(10),
        base_seed: fill(args.seed, &file, "seed")?.unwrap_or(1),
        noise_mode: parse_noise_mode(fill(args.noise_mode, &file, "noise_mode")?)?,
    };
    config.validate()?;

    prepare_out_dir(&out, args.force)?;
    let _lock = DirLock::acquire(&out)?;
    let (data_files, dataset) = load_dataset(&data_dir)?;

    let mut manifest = RunManifest::new("train", env!("CARGO_PKG_VERSION"));
    manifest.set("model", kind.id());
    manifest.set("snr", &snr_raw);
    manifest.set("epochs", config.epochs);
    manifest.set("lr", config.lr);
    manifest.set("seeds", config.n_seeds);
    manifest.set("base_seed", config.base_seed);
    manifest.set(
        "noise_mode",
        match config.noise_mode {
            NoiseMode::FreshPerEpoch => "fresh",
            NoiseMode::FixedPerDataset => "fixed",
        },
    );
    manifest.set("data", data_dir.display());
    for f in &data_files {
        manifest.add_input(f)?;
    }
    if let Some(cfg) = &args.config {
        manifest.add_input(cfg)?;
    }

    let config_echo = [
        ("model", kind.id().to_string()),
        ("snr", snr_raw.clone()),
        ("epochs", config.epochs.to_string()),
        ("lr", config.lr.to_string()),
        ("seeds", config.n_seeds.to_string()),
        ("base_seed", config.base_seed.to_string()),
    ];
    let echo_file = fs::File::create(out.join("config.txt"))?;
    wavelab::train::write_config_echo(echo_file, &config_echo)?;
    manifest.add_output(&out, "config.txt")?;

    if snrs.len() == 1 {
        let (models, train_report) = train_multi(kind, &dataset, &config)?;
        fs::write(out.join("curve.csv"), train_report.curve_csv())?;
        manifest.add_output(&out, "curve.csv")?;
        for (run, model) in models.iter().enumerate() {
            let name = format!("ckpt_{}_run{run}.ckpt", kind.id());
            checkpoint::write_checkpoint_file(out.join(&name), model.as_ref())?;
            manifest.add_output(&out, &name)?;
        }
        eprintln!(
            "train: {} at SNR {} for {} epochs x {} seeds: final mse {:.3e} +/- {:.3e} ({:.0}s)",
            kind.id(),
            config.train_snr,
            config.epochs,
            config.n_seeds,
            train_report.final_mean,
            train_report.final_std,
            train_report.wall_seconds
        );
    } else {
        let rows = sweep_snr(&[kind], &snrs, &dataset, &config)?;
        fs::write(out.join("sweep.csv"), sweep_csv(&rows))?;
        manifest.add_output(&out, "sweep.csv")?;
        eprintln!("train: swept {} over {} SNRs", kind.id(), snrs.len());
    }
    manifest.write(&out)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => HashMap::new(),
    };
    let ckpt_path: PathBuf = require(fill(args.checkpoint, &file, "checkpoint")?, "checkpoint")?;
    let mode: String = require(fill(args.mode, &file, "mode")?, "mode")?;
    let test_snr: f64 = require(fill(args.test_snr, &file, "test_snr")?, "test-snr")?;
    let data_dir: PathBuf = require(fill(args.data, &file, "data")?, "data")?;
    let out = resolve_out(fill(args.out, &file, "out")?, "eval")?;
    let eta = fill(args.eta, &file, "eta")?;
    let history = fill(args.history, &file, "history")?;
    let cycles = fill(args.cycles, &file, "cycles")?.unwrap_or(30);
    let seed = fill(args.seed, &file, "seed")?.unwrap_or(1);

    let induction = match mode.as_str() {
        "tf" => {
            if eta.is_some() || history.is_some() {
                return Err(Error::InvalidConfig(
                    "--eta/--history only apply to --mode at".into(),
                ));
            }
            Induction::TeacherForce
        }
        "at" => {
            let eta = require(eta, "eta")?;
            let history = require(history, "history")?;
            let mut at = AtConfig::new(eta, history);
            at.cycles = cycles;
            Induction::ActiveTuning(at)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "--mode must be tf or at, got `{other}`"
            )))
        }
    };

    prepare_out_dir(&out, args.force)?;
    let _lock = DirLock::acquire(&out)?;
    let (data_files, test_set) = load_dataset(&data_dir)?;
    let (h, w) = (test_set[0].h, test_set[0].w);
    let model = checkpoint::read_checkpoint_file(&ckpt_path, h, w)?;

    let mut config = EvalConfig::new(induction, test_snr, seed);
    config.train_snr = fill(args.train_snr, &file, "train_snr")?;
    if let Some(n) = fill(args.induction, &file, "induction")? {
        config.induction_steps = n;
    }
    if let Some(n) = fill(args.closed_loop, &file, "closed_loop")? {
        config.closed_loop_steps = n;
    }
    config.keep_artifacts = args.dump_frames || mode == "at";

    let report = evaluate(model.as_ref(), &test_set, &config)?;

    let mut manifest = RunManifest::new("eval", env!("CARGO_PKG_VERSION"));
    manifest.set("checkpoint", ckpt_path.display());
    manifest.set("model", report.model_id.clone());
    manifest.set("mode", &mode);
    manifest.set("test_snr", test_snr);
    manifest.set("seed", seed);
    manifest.set("induction_steps", config.induction_steps);
    manifest.set("closed_loop_steps", config.closed_loop_steps);
    manifest.add_input(&ckpt_path)?;
    for f in &data_files {
        manifest.add_input(f)?;
    }
    if let Some(cfg) = &args.config {
        manifest.add_input(cfg)?;
    }

    let csv = format!(
        "{}\n{}\n",
        wavelab::eval::EvalReport::csv_header(),
        report.csv_row()
    );
    fs::write(out.join("eval_report.csv"), csv)?;
    manifest.add_output(&out, "eval_report.csv")?;

    if let Some(artifacts) = &report.artifacts {
        for (idx, art) in artifacts.iter().enumerate() {
            if args.dump_frames {
                let clean_name = format!("seq{idx:02}_clean.wavd");
                let noisy_name = format!("seq{idx:02}_noisy.wavd");
                let roll_name = format!("seq{idx:02}_rollout.wavd");
                wavd::write_sequence_file(out.join(&clean_name), &test_set[idx])?;
                wavd::write_sequence_file(out.join(&noisy_name), &art.noisy)?;
                wavd::write_sequence_file(out.join(&roll_name), &art.rollout)?;
                manifest.add_output(&out, &clean_name)?;
                manifest.add_output(&out, &noisy_name)?;
                manifest.add_output(&out, &roll_name)?;
            }
            if let Some(trace) = &art.trace {
                let trace_name = format!("trace_seq{idx:02}.csv");
                fs::write(out.join(&trace_name), trace.csv())?;
                manifest.add_output(&out, &trace_name)?;
            }
        }
    }
    manifest.write(&out)?;
    eprintln!(
        "eval: {} mode {} test-snr {}: dtw {:.3} +/- {:.3}, corr {:.3}",
        report.model_id, report.mode, test_snr, report.mean_dtw, report.std_dtw, report.mean_corr
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let out = resolve_out(args.out, "report")?;
    prepare_out_dir(&out, args.force)?;
    let _lock = DirLock::acquire(&out)?;
    let mut manifest = RunManifest::new("report", env!("CARGO_PKG_VERSION"));
    for dir in &args.inputs {
        manifest.set("in", dir.display());
    }

    let mut wrote_any = false;
    for table in ["curve.csv", "eval_report.csv", "sweep.csv"] {
        let present: Vec<PathBuf> = args
            .inputs
            .iter()
            .filter(|d| d.join(table).exists())
            .cloned()
            .collect();
        if present.is_empty() {
            continue;
        }
        let merged = report::merge_csv_tables(&present, table)?;
        let name = format!("merged_{table}");
        fs::write(out.join(&name), merged)?;
        manifest.add_output(&out, &name)?;
        wrote_any = true;
    }

    if let Some(step) = args.strip_step {
        let idx = args.strip_seq;
        let mut panels: Vec<(PathBuf, usize)> = Vec::new();
        // Fig-5-style layout: target | noisy from the first run that dumped
        // them, then one rollout panel per run. The strip step is absolute;
        // rollouts start after their run's induction phase.
        for dir in &args.inputs {
            let clean = dir.join(format!("seq{idx:02}_clean.wavd"));
            let noisy = dir.join(format!("seq{idx:02}_noisy.wavd"));
            if clean.exists() && noisy.exists() {
                panels.push((clean, 0));
                panels.push((noisy, 0));
                break;
            }
        }
        for dir in &args.inputs {
            let rollout = dir.join(format!("seq{idx:02}_rollout.wavd"));
            if rollout.exists() {
                let start = report::manifest_value(dir, "induction_steps")?
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0);
                panels.push((rollout, start));
            }
        }
        if panels.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no dumped frames for sequence {idx} in the given runs (eval --dump-frames)"
            )));
        }
        let strip = report::frame_strip(&panels, step)?;
        let name = format!("strip_step{step}_seq{idx:02}.pgm");
        pgm::write_pgm_file(out.join(&name), &strip)?;
        manifest.add_output(&out, &name)?;
        wrote_any = true;
    }

    if !wrote_any {
        return Err(Error::InvalidConfig(
            "nothing to report: no known tables or dumped frames in the inputs".into(),
        ));
    }
    manifest.write(&out)?;
    eprintln!("report: wrote merged outputs to {}", out.display());
    Ok(())
}
