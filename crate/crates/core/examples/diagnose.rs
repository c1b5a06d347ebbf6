use wavelab::checkpoint;
use wavelab::eval::{evaluate, pearson, closed_loop, teacher_force, EvalConfig, Induction};
use wavelab::model::ModelKind;
use wavelab::train::{train_multi, NoiseMode, TrainConfig};
use wavelab::wave::{add_noise, make_dataset, NoiseSpec, WaveConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("train");
    let ckpt_path = "/tmp/diag_distana4.ckpt";

    let test_template = WaveConfig { steps: 150, ..WaveConfig::default() };
    let test_set = make_dataset(20, &test_template, 2002).unwrap();

    if mode == "train" {
        let train_template = WaveConfig { steps: 40, ..WaveConfig::default() };
        let train_set = make_dataset(100, &train_template, 1001).unwrap();
        let config = TrainConfig {
            epochs: 200, lr: 0.001, train_snr: 1e5, n_seeds: 1,
            base_seed: 42, noise_mode: NoiseMode::FreshPerEpoch,
        };
        let (models, report) = train_multi(ModelKind::Distana4, &train_set, &config).unwrap();
        checkpoint::write_checkpoint_file(ckpt_path, models[0].as_ref()).unwrap();
        eprintln!("trained: final mse {:.3e}", report.final_mean);
    }

    let model = checkpoint::read_checkpoint_file(ckpt_path, 16, 16).unwrap();
    let config = EvalConfig::new(Induction::TeacherForce, 1e5, 7);
    let rep = evaluate(model.as_ref(), &test_set, &config).unwrap();
    eprintln!("mean_dtw={:.3} mean_corr={:.3}", rep.mean_dtw, rep.mean_corr);
    eprint!("per-seq corr:");
    for c in &rep.per_sequence_corr { eprint!(" {c:.2}"); }
    eprintln!();

    // Detailed look at the worst and best sequence.
    let mut order: Vec<usize> = (0..20).collect();
    order.sort_by(|&a, &b| rep.per_sequence_corr[a].partial_cmp(&rep.per_sequence_corr[b]).unwrap());
    for &idx in [order[0], order[19]].iter() {
        let clean = &test_set[idx];
        let noisy = add_noise(clean, &NoiseSpec::new(1e5, 12345 + idx as u64)).unwrap();
        let (state, pending) = teacher_force(model.as_ref(), &noisy, 30).unwrap();
        let roll = closed_loop(model.as_ref(), &state, &pending, 120).unwrap();
        let window = clean.window(30, 150);
        // Amplitude trajectory: rms per frame of rollout vs clean.
        let rms = |vals: &[f64]| (vals.iter().map(|v| v*v).sum::<f64>() / vals.len() as f64).sqrt();
        eprintln!("--- seq {idx} (corr {:.2})", rep.per_sequence_corr[idx]);
        for t in [0usize, 20, 40, 60, 80, 100, 119] {
            eprintln!("  t={t:3} rms(roll)={:.4} rms(clean)={:.4}", rms(roll.frame(t)), rms(window.frame(t)));
        }
        // Correlation by cell variance decile.
        let mut cells: Vec<(f64, f64)> = Vec::new(); // (clean var, corr)
        for i in 0..16 { for j in 0..16 {
            let cs = window.cell_series(i, j);
            let rs = roll.cell_series(i, j);
            let mean = cs.iter().sum::<f64>() / cs.len() as f64;
            let var = cs.iter().map(|v| (v-mean)*(v-mean)).sum::<f64>() / cs.len() as f64;
            cells.push((var, pearson(&rs, &cs)));
        }}
        cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for chunk in 0..4 {
            let part = &cells[chunk*64..(chunk+1)*64];
            let mc = part.iter().map(|c| c.1).sum::<f64>() / 64.0;
            let mv = part.iter().map(|c| c.0).sum::<f64>() / 64.0;
            eprintln!("  var-quartile {chunk}: mean var {mv:.5} mean corr {mc:.3}");
        }
    }
}
