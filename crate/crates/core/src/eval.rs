//! Test-time protocol: activity induction (teacher forcing or active
//! tuning) followed by a closed-loop rollout, scored per cell with dynamic
//! time warping against the clean signal.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{step_plain, Model, ModelState};
use crate::rng::derive_seed;
use crate::tuning::{at_induce, AtConfig};
use crate::wave::{add_noise, NoiseSpec, Sequence};

const EVAL_NOISE_STREAM: u64 = 0xE7A1;

/// Classic dynamic-programming DTW with absolute-difference local cost,
/// full window, boundary-matched paths.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidConfig("dtw requires non-empty series".into()));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &av in a {
        curr[0] = f64::INFINITY;
        for (j, &bv) in b.iter().enumerate() {
            let cost = (av - bv).abs();
            curr[j + 1] = cost + prev[j + 1].min(curr[j]).min(prev[j]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// Pearson correlation; zero-variance series correlate as 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Feeds the first `n` noisy frames into the model to charge its state.
/// Returns the state and the pending prediction emitted by the last step.
pub fn teacher_force(
    model: &dyn Model,
    noisy: &Sequence,
    n: usize,
) -> Result<(ModelState, Vec<f64>)> {
    if n > noisy.t {
        return Err(Error::InvalidConfig(format!(
            "cannot teacher-force {n} steps on a {}-frame sequence",
            noisy.t
        )));
    }
    let mut state = ModelState::zeros(&model.state_shapes());
    let mut pending = vec![0.0; noisy.h * noisy.w];
    for t in 0..n {
        let (out, next) = step_plain(model, &state, noisy.frame(t))?;
        state = next;
        pending = out;
    }
    Ok((state, pending))
}

/// Closed-loop rollout of `n` frames. The first frame is the pending
/// prediction handed over by induction; afterwards each prediction is fed
/// back as the next input.
pub fn closed_loop(
    model: &dyn Model,
    state: &ModelState,
    pending: &[f64],
    n: usize,
) -> Result<Sequence> {
    let (h, w) = model.grid();
    let mut out = Sequence::zeros(n, h, w);
    let mut state = state.clone();
    let mut frame = pending.to_vec();
    for t in 0..n {
        out.values[t * h * w..(t + 1) * h * w].copy_from_slice(&frame);
        if t + 1 < n {
            let (next_frame, next_state) = step_plain(model, &state, &frame)?;
            state = next_state;
            frame = next_frame;
        }
    }
    Ok(out)
}

/// How the first `induction_steps` test frames charge the model state.
#[derive(Debug, Clone)]
pub enum Induction {
    TeacherForce,
    ActiveTuning(AtConfig),
}

impl Induction {
    pub fn label(&self) -> &'static str {
        match self {
            Induction::TeacherForce => "tf",
            Induction::ActiveTuning(_) => "at",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub induction: Induction,
    pub induction_steps: usize,
    pub closed_loop_steps: usize,
    pub test_snr: f64,
    pub seed: u64,
    /// Optional label echoed into the report CSV.
    pub train_snr: Option<f64>,
    /// Keep per-sequence rollouts, noisy copies and tuning traces in the
    /// report (for frame dumps and trace CSVs).
    pub keep_artifacts: bool,
}

impl EvalConfig {
    pub fn new(induction: Induction, test_snr: f64, seed: u64) -> Self {
        EvalConfig {
            induction,
            induction_steps: 30,
            closed_loop_steps: 120,
            test_snr,
            seed,
            train_snr: None,
            keep_artifacts: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model_id: String,
    pub mode: String,
    pub test_snr: f64,
    pub train_snr: Option<f64>,
    pub eta: Option<f64>,
    pub history: Option<usize>,
    /// Cell-averaged DTW per test sequence, in dataset order.
    pub per_sequence_dtw: Vec<f64>,
    pub mean_dtw: f64,
    pub std_dtw: f64,
    /// Cell-averaged rollout/clean correlation per test sequence.
    pub per_sequence_corr: Vec<f64>,
    pub mean_corr: f64,
    /// Present when the config asked for artifacts.
    pub artifacts: Option<Vec<EvalArtifacts>>,
}

/// Per-sequence byproducts of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalArtifacts {
    pub noisy: Sequence,
    pub rollout: Sequence,
    pub trace: Option<crate::tuning::TuningTrace>,
}

impl EvalReport {
    /// CSV with the fixed header
    /// `model,train_snr,test_snr,mode,eta,history,mean_dtw,std_dtw`.
    pub fn csv_header() -> &'static str {
        "model,train_snr,test_snr,mode,eta,history,mean_dtw,std_dtw"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6}",
            self.model_id,
            self.train_snr.map(|v| v.to_string()).unwrap_or_default(),
            self.test_snr,
            self.mode,
            self.eta.map(|v| v.to_string()).unwrap_or_default(),
            self.history.map(|v| v.to_string()).unwrap_or_default(),
            self.mean_dtw,
            self.std_dtw
        )
    }
}

/// Induces activity from the noisy frames only, then rolls the model in
/// closed loop. No clean data enters this path.
pub fn induce_and_roll(
    model: &dyn Model,
    noisy: &Sequence,
    config: &EvalConfig,
) -> Result<(Sequence, Option<crate::tuning::TuningTrace>)> {
    let (state, pending, trace) = match &config.induction {
        Induction::TeacherForce => {
            let (state, pending) = teacher_force(model, noisy, config.induction_steps)?;
            (state, pending, None)
        }
        Induction::ActiveTuning(at) => {
            let outcome = at_induce(model, noisy, at, config.induction_steps)?;
            (outcome.state, outcome.pending, Some(outcome.trace))
        }
    };
    let rollout = closed_loop(model, &state, &pending, config.closed_loop_steps)?;
    Ok((rollout, trace))
}

/// Cell-averaged DTW between a rollout and the matching clean window.
/// The scorer is the only place the clean sequence is read.
pub fn score_rollout_dtw(pred: &Sequence, clean_window: &Sequence) -> Result<f64> {
    debug_assert_eq!((pred.h, pred.w), (clean_window.h, clean_window.w));
    let mut total = 0.0;
    for i in 0..pred.h {
        for j in 0..pred.w {
            total += dtw(&pred.cell_series(i, j), &clean_window.cell_series(i, j))?;
        }
    }
    Ok(total / (pred.h * pred.w) as f64)
}

pub fn score_rollout_corr(pred: &Sequence, clean_window: &Sequence) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.h {
        for j in 0..pred.w {
            total += pearson(&pred.cell_series(i, j), &clean_window.cell_series(i, j));
        }
    }
    total / (pred.h * pred.w) as f64
}

/// Full protocol over a clean test set: per sequence, add noise at the test
/// SNR, induce, roll closed loop, and score against the clean signal over
/// the closed-loop steps only.
pub fn evaluate(model: &dyn Model, test_set: &[Sequence], config: &EvalConfig) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::InvalidConfig("empty test set".into()));
    }
    let horizon = config.induction_steps + config.closed_loop_steps;
    for (idx, seq) in test_set.iter().enumerate() {
        if seq.t < horizon {
            return Err(Error::InvalidConfig(format!(
                "test sequence {idx} has {} frames, protocol needs {horizon}",
                seq.t
            )));
        }
        if (seq.h, seq.w) != model.grid() {
            return Err(Error::InvalidConfig(format!(
                "test sequence {idx} is {}x{}, model grid is {:?}",
                seq.h,
                seq.w,
                model.grid()
            )));
        }
    }
    let scores: Vec<Result<(f64, f64, Option<EvalArtifacts>)>> = test_set
        .par_iter()
        .enumerate()
        .map(|(idx, clean)| {
            let spec = NoiseSpec::new(
                config.test_snr,
                derive_seed(config.seed, EVAL_NOISE_STREAM, idx as u64),
            );
            let noisy = add_noise(clean, &spec)?;
            let (pred, trace) = induce_and_roll(model, &noisy, config)?;
            let clean_window = clean.window(config.induction_steps, horizon);
            let d = score_rollout_dtw(&pred, &clean_window)?;
            let c = score_rollout_corr(&pred, &clean_window);
            let artifacts = config.keep_artifacts.then(|| EvalArtifacts {
                noisy,
                rollout: pred,
                trace,
            });
            Ok((d, c, artifacts))
        })
        .collect();

    let mut per_sequence_dtw = Vec::with_capacity(test_set.len());
    let mut per_sequence_corr = Vec::with_capacity(test_set.len());
    let mut artifacts = config.keep_artifacts.then(Vec::new);
    for s in scores {
        let (d, c, a) = s?;
        per_sequence_dtw.push(d);
        per_sequence_corr.push(c);
        if let (Some(list), Some(a)) = (artifacts.as_mut(), a) {
            list.push(a);
        }
    }
    let (mean_dtw, std_dtw) = crate::train::mean_std(&per_sequence_dtw);
    let (mean_corr, _) = crate::train::mean_std(&per_sequence_corr);
    let (eta, history) = match &config.induction {
        Induction::TeacherForce => (None, None),
        Induction::ActiveTuning(at) => (Some(at.eta), Some(at.history)),
    };
    Ok(EvalReport {
        model_id: model.model_id().to_string(),
        mode: config.induction.label().to_string(),
        test_snr: config.test_snr,
        train_snr: config.train_snr,
        eta,
        history,
        per_sequence_dtw,
        mean_dtw,
        std_dtw,
        per_sequence_corr,
        mean_corr,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::rng::splitmix64;

    /// Every monotone boundary-matched warping path, evaluated recursively
    /// without memoization: the independent oracle for the DP.
    pub fn dtw_brute(a: &[f64], b: &[f64]) -> f64 {
        fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let cost = (a[i] - b[j]).abs();
            if i == 0 && j == 0 {
                return cost;
            }
            let mut best = f64::INFINITY;
            if i > 0 {
                best = best.min(go(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(go(a, b, i, j - 1));
            }
            if i > 0 && j > 0 {
                best = best.min(go(a, b, i - 1, j - 1));
            }
            cost + best
        }
        go(a, b, a.len() - 1, b.len() - 1)
    }

    #[test]
    fn dtw_identity_and_simple_pair() {
        let x = [0.3, -0.5, 1.0, 0.0];
        assert_eq!(dtw(&x, &x).unwrap(), 0.0);
        // Each aligned pair costs 1; the diagonal path is optimal.
        assert_eq!(dtw(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn dtw_rejects_empty_series() {
        assert!(dtw(&[], &[1.0]).is_err());
        assert!(dtw(&[1.0], &[]).is_err());
    }

    #[test]
    fn dtw_matches_brute_force_on_small_pairs() {
        fn rand_series(len: usize, state: &mut u64) -> Vec<f64> {
            (0..len)
                .map(|_| {
                    *state = splitmix64(*state);
                    ((*state % 3) as f64) - 1.0
                })
                .collect()
        }
        let mut state = 99u64;
        for _ in 0..500 {
            state = splitmix64(state);
            let la = 1 + (state % 6) as usize;
            state = splitmix64(state);
            let lb = 1 + (state % 6) as usize;
            let a = rand_series(la, &mut state);
            let b = rand_series(lb, &mut state);
            let fast = dtw(&a, &b).unwrap();
            let brute = dtw_brute(&a, &b);
            assert!((fast - brute).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn dtw_symmetry_on_random_pairs() {
        let mut state = 7u64;
        for _ in 0..1000 {
            state = splitmix64(state);
            let la = 1 + (state % 20) as usize;
            state = splitmix64(state);
            let lb = 1 + (state % 20) as usize;
            let series = |n: usize, mut s: u64| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        s = splitmix64(s);
                        s as f64 / u64::MAX as f64 * 2.0 - 1.0
                    })
                    .collect()
            };
            state = splitmix64(state);
            let a = series(la, state);
            state = splitmix64(state);
            let b = series(lb, state);
            let ab = dtw(&a, &b).unwrap();
            let ba = dtw(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn teacher_force_zero_steps_keeps_zero_state() {
        let model = ModelKind::Distana4.build(4, 4, 1).unwrap();
        let seq = Sequence::zeros(10, 4, 4);
        let (state, pending) = teacher_force(model.as_ref(), &seq, 0).unwrap();
        assert_eq!(state, ModelState::zeros(&model.state_shapes()));
        assert!(pending.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quiescent_model_stays_silent_through_protocol() {
        let mut model = ModelKind::Distana4.build(4, 4, 1).unwrap();
        model.params_mut().fill(0.0);
        let mut seq = Sequence::zeros(40, 4, 4);
        for (i, v) in seq.values.iter_mut().enumerate() {
            *v = ((i as f64) * 0.1).sin() * 0.5;
        }
        let (state, pending) = teacher_force(model.as_ref(), &seq, 10).unwrap();
        assert!(pending.iter().all(|v| *v == 0.0));
        let rollout = closed_loop(model.as_ref(), &state, &pending, 20).unwrap();
        assert!(rollout.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let model = ModelKind::Distana4.build(4, 4, 5).unwrap();
        let mut seq = Sequence::zeros(40, 4, 4);
        for (i, v) in seq.values.iter_mut().enumerate() {
            *v = ((i as f64) * 0.07).cos() * 0.3;
        }
        let (state, pending) = teacher_force(model.as_ref(), &seq, 12).unwrap();
        let a = closed_loop(model.as_ref(), &state, &pending, 25).unwrap();
        let b = closed_loop(model.as_ref(), &state, &pending, 25).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn quiescent_model_dtw_equals_zero_rollout_reference() {
        let mut model = ModelKind::Distana4.build(4, 4, 1).unwrap();
        model.params_mut().fill(0.0);
        let template = crate::wave::WaveConfig {
            height: 4,
            width: 4,
            steps: 40,
            source: (2.0, 2.0),
            ..Default::default()
        };
        let clean = crate::wave::simulate_wave(&template).unwrap();
        let config = EvalConfig {
            induction: Induction::TeacherForce,
            induction_steps: 10,
            closed_loop_steps: 30,
            test_snr: 1e5,
            seed: 3,
            train_snr: None,
            keep_artifacts: false,
        };
        let report = evaluate(model.as_ref(), std::slice::from_ref(&clean), &config).unwrap();
        // Reference: DTW of an all-zero series against the clean window.
        let window = clean.window(10, 40);
        let mut expected = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                expected += dtw(&vec![0.0; 30], &window.cell_series(i, j)).unwrap();
            }
        }
        expected /= 16.0;
        assert!((report.mean_dtw - expected).abs() < 1e-12);
        assert_eq!(report.std_dtw, 0.0); // single sequence
    }
}
