//! Sequence training loop: noisy-data teacher forcing with MSE and Adam.

use std::io::Write as IoWrite;
use std::time::Instant;

use rayon::prelude::*;

use crate::adam::AdamState;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{bind_params, param_grads_flat, Model, ModelKind};
use crate::rng::derive_seed;
use crate::wave::{add_noise, NoiseSpec, Sequence};

const NOISE_STREAM: u64 = 0xA0;
const SEED_STREAM: u64 = 0x5EED;

/// Whether noise is redrawn every epoch or fixed once per dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    FreshPerEpoch,
    FixedPerDataset,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub train_snr: f64,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub noise_mode: NoiseMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.001,
            train_snr: 1e5,
            n_seeds: 10,
            base_seed: 1,
            noise_mode: NoiseMode::FreshPerEpoch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.n_seeds < 1 {
            return Err(Error::InvalidConfig("epochs and n_seeds must be >= 1".into()));
        }
        if self.lr < 0.0 {
            return Err(Error::InvalidConfig("learning rate must be >= 0".into()));
        }
        if self.train_snr <= 0.0 {
            return Err(Error::InvalidConfig("train SNR must be > 0".into()));
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        derive_seed(self.base_seed, SEED_STREAM, run as u64)
    }
}

/// One training run's loss curve.
#[derive(Debug, Clone)]
pub struct RunCurve {
    pub seed: u64,
    pub epoch_mse: Vec<f64>,
}

/// Multi-seed training result: per-seed curves plus summary statistics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model_id: String,
    pub train_snr: f64,
    pub curves: Vec<RunCurve>,
    pub final_mean: f64,
    pub final_std: f64,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// CSV with header `epoch,seed,mse`.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,seed,mse\n");
        for curve in &self.curves {
            for (epoch, mse) in curve.epoch_mse.iter().enumerate() {
                out.push_str(&format!("{},{},{:.12e}\n", epoch + 1, curve.seed, mse));
            }
        }
        out
    }
}

/// Mean teacher-forced MSE of `model` on one noisy sequence, together with
/// the flat parameter gradient. Inputs are the noisy frames 0..T-2, targets
/// the noisy frames 1..T-1; outputs before the model's context requirement
/// are not scored.
fn sequence_loss_and_grads(
    model: &dyn Model,
    noisy: &Sequence,
    with_grads: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if noisy.t < model.min_context() + 2 {
        return Err(Error::InvalidConfig(format!(
            "sequence of {} frames is too short for {} (needs at least {})",
            noisy.t,
            model.model_id(),
            model.min_context() + 2
        )));
    }
    let hw = noisy.h * noisy.w;
    let mut tape = Tape::new();
    let params = bind_params(model, &mut tape, with_grads);
    let frames: Vec<_> = (0..noisy.t - 1)
        .map(|t| tape.leaf(model.input_shape(), noisy.frame(t).to_vec(), false))
        .collect();
    let outputs = model.teacher_forced_outputs(&mut tape, &params, &frames)?;
    let scored = &outputs[model.min_context()..];

    let stacked = tape.concat(scored)?;
    let n_steps = scored.len();
    let mut target = Vec::with_capacity(n_steps * hw);
    for t in model.min_context()..noisy.t - 1 {
        target.extend_from_slice(noisy.frame(t + 1));
    }
    let target = tape.leaf(tape.shape(stacked).to_vec(), target, false);
    let loss = tape.mse(stacked, target)?;
    let loss_value = tape.value(loss)[0];
    if !with_grads {
        return Ok((loss_value, None));
    }
    tape.backward(loss)?;
    let grads = param_grads_flat(model, &tape, &params);
    Ok((loss_value, Some(grads)))
}

/// Trains `model` in place for one seeded run. Per sequence: draw noise,
/// run full teacher forcing, one Adam step; state is implicitly reset since
/// every sequence builds a fresh graph from the zero state. Gradients live
/// on the per-sequence tape, so nothing leaks across steps.
pub fn train_single(
    model: &mut dyn Model,
    dataset: &[Sequence],
    config: &TrainConfig,
    run_seed: u64,
) -> Result<RunCurve> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty training dataset".into()));
    }
    if dataset.iter().any(|s| s.t < 2) {
        return Err(Error::InvalidConfig("training sequences need at least 2 frames".into()));
    }
    let mut adam = AdamState::new(model.params().len(), config.lr);
    let mut epoch_mse = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_sum = 0.0;
        for (idx, clean) in dataset.iter().enumerate() {
            let draw = match config.noise_mode {
                NoiseMode::FreshPerEpoch => (epoch * dataset.len() + idx) as u64,
                NoiseMode::FixedPerDataset => idx as u64,
            };
            let spec = NoiseSpec::new(config.train_snr, derive_seed(run_seed, NOISE_STREAM, draw));
            let noisy = add_noise(clean, &spec)?;
            let (loss, grads) = sequence_loss_and_grads(model, &noisy, config.lr > 0.0)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    seed: run_seed,
                });
            }
            if let Some(grads) = grads {
                adam.step(model.params_mut(), &grads)?;
            }
            epoch_sum += loss;
        }
        epoch_mse.push(epoch_sum / dataset.len() as f64);
    }
    Ok(RunCurve {
        seed: run_seed,
        epoch_mse,
    })
}

/// One trained model per seed plus the report. Seeds run in parallel; each
/// run is sequential and deterministic under its derived seed.
pub fn train_multi(
    kind: ModelKind,
    dataset: &[Sequence],
    config: &TrainConfig,
) -> Result<(Vec<Box<dyn Model>>, TrainReport)> {
    config.validate()?;
    let (h, w) = dataset
        .first()
        .map(|s| (s.h, s.w))
        .ok_or_else(|| Error::InvalidConfig("empty training dataset".into()))?;
    let start = Instant::now();
    let runs: Vec<Result<(Box<dyn Model>, RunCurve)>> = (0..config.n_seeds)
        .into_par_iter()
        .map(|run| {
            let run_seed = config.run_seed(run);
            let mut model = kind.build(h, w, run_seed)?;
            let curve = train_single(model.as_mut(), dataset, config, run_seed)?;
            Ok((model, curve))
        })
        .collect();
    let mut models = Vec::with_capacity(config.n_seeds);
    let mut curves = Vec::with_capacity(config.n_seeds);
    for run in runs {
        let (model, curve) = run?;
        models.push(model);
        curves.push(curve);
    }
    let finals: Vec<f64> = curves.iter().map(|c| *c.epoch_mse.last().unwrap()).collect();
    let (mean, std) = mean_std(&finals);
    let report = TrainReport {
        model_id: kind.id().to_string(),
        train_snr: config.train_snr,
        curves,
        final_mean: mean,
        final_std: std,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((models, report))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row of the SNR sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model_id: String,
    pub train_snr: f64,
    pub outcome: std::result::Result<(f64, f64), String>,
}

/// Final training MSE (mean +/- std over seeds) per (model, SNR) cell.
/// Per-cell failures are recorded in the row and the sweep continues.
pub fn sweep_snr(
    kinds: &[ModelKind],
    snrs: &[f64],
    dataset: &[Sequence],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if kinds.is_empty() || snrs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs >= 1 model and >= 1 SNR".into()));
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        for &snr in snrs {
            let cell_config = TrainConfig {
                train_snr: snr,
                ..config.clone()
            };
            let outcome = match train_multi(kind, dataset, &cell_config) {
                Ok((_, report)) => Ok((report.final_mean, report.final_std)),
                Err(e) => Err(e.to_string()),
            };
            rows.push(SweepRow {
                model_id: kind.id().to_string(),
                train_snr: snr,
                outcome,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `model,train_snr,mean_mse,std_mse,status`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model,train_snr,mean_mse,std_mse,status\n");
    for row in rows {
        match &row.outcome {
            Ok((mean, std)) => out.push_str(&format!(
                "{},{},{:.12e},{:.12e},ok\n",
                row.model_id, row.train_snr, mean, std
            )),
            Err(e) => out.push_str(&format!(
                "{},{},,,{}\n",
                row.model_id,
                row.train_snr,
                e.replace(',', ";")
            )),
        }
    }
    out
}

/// Plain-text `key=value` run config echo stored alongside outputs.
pub fn write_config_echo<W: IoWrite>(
    mut out: W,
    entries: &[(&str, String)],
) -> std::io::Result<()> {
    for (k, v) in entries {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}
