use std::time::Instant;
use wavelab::eval::{evaluate, EvalConfig, Induction};
use wavelab::model::ModelKind;
use wavelab::train::{train_multi, NoiseMode, TrainConfig};
use wavelab::wave::{make_dataset, WaveConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let train_template = WaveConfig { steps: 40, ..WaveConfig::default() };
    let train_set = make_dataset(100, &train_template, 1001).unwrap();
    let test_template = WaveConfig { steps: 150, ..WaveConfig::default() };
    let test_set = make_dataset(20, &test_template, 2002).unwrap();

    let config = TrainConfig {
        epochs,
        lr: 0.001,
        train_snr: 1e5,
        n_seeds: 1,
        base_seed: 42,
        noise_mode: NoiseMode::FreshPerEpoch,
    };
    let t0 = Instant::now();
    let (models, report) = train_multi(ModelKind::Distana4, &train_set, &config).unwrap();
    let train_time = t0.elapsed().as_secs_f64();
    let curve = &report.curves[0].epoch_mse;
    println!("epochs={epochs} wall={train_time:.1}s per-epoch={:.2}s", train_time / epochs as f64);
    println!("first-epoch mse={:.5e} last={:.5e}", curve[0], curve.last().unwrap());

    let t1 = Instant::now();
    let eval_config = EvalConfig::new(Induction::TeacherForce, 1e5, 7);
    let rep = evaluate(models[0].as_ref(), &test_set, &eval_config).unwrap();
    println!("eval wall={:.1}s mean_dtw={:.3} std={:.3} mean_corr={:.3}",
             t1.elapsed().as_secs_f64(), rep.mean_dtw, rep.std_dtw, rep.mean_corr);
}
