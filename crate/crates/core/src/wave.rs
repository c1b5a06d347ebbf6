//! 2D circular-wave benchmark: leapfrog simulation, SNR-calibrated noise,
//! and dataset generation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Gaussian};

/// A T x H x W scalar field movie, row-major in `[t][i][j]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl Sequence {
    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        Sequence {
            t,
            h,
            w,
            values: vec![0.0; t * h * w],
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.h * self.w..(t + 1) * self.h * self.w]
    }

    pub fn at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[(t * self.h + i) * self.w + j]
    }

    /// Time series of a single cell.
    pub fn cell_series(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.at(t, i, j)).collect()
    }

    /// Sub-sequence of frames `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Sequence {
        let hw = self.h * self.w;
        Sequence {
            t: end - start,
            h: self.h,
            w: self.w,
            values: self.values[start * hw..end * hw].to_vec(),
        }
    }
}

/// Parameters of the leapfrog wave simulation.
#[derive(Debug, Clone)]
pub struct WaveConfig {
    pub height: usize,
    pub width: usize,
    pub steps: usize,
    /// Wave speed in cells per unit time.
    pub wave_speed: f64,
    pub dt: f64,
    pub dx: f64,
    /// Source center in continuous grid coordinates (row, col).
    pub source: (f64, f64),
    /// Gaussian pulse width in cells.
    pub pulse_sigma: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            height: 16,
            width: 16,
            steps: 40,
            wave_speed: 0.5,
            dt: 1.0,
            dx: 1.0,
            source: (8.0, 8.0),
            pulse_sigma: 0.5,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

impl WaveConfig {
    pub fn courant(&self) -> f64 {
        self.wave_speed * self.dt / self.dx
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 1 || self.width < 1 || self.steps < 1 {
            return Err(Error::InvalidConfig("grid and steps must be >= 1".into()));
        }
        if self.courant() > 1.0 / 2.0_f64.sqrt() {
            return Err(Error::InvalidConfig(format!(
                "CFL violation: c*dt/dx = {:.4} exceeds 1/sqrt(2)",
                self.courant()
            )));
        }
        let (ci, cj) = self.source;
        if ci <= 0.0 || cj <= 0.0 || ci >= (self.height - 1) as f64 || cj >= (self.width - 1) as f64
        {
            return Err(Error::InvalidConfig(format!(
                "source ({ci}, {cj}) not strictly inside the {}x{} grid",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Explicit leapfrog integration of the 2D wave equation with zero-Dirichlet
/// conditions just outside the grid (off-grid neighbors read as 0), started
/// from a Gaussian bump at rest. The result is normalized to max |u| = 1.
pub fn simulate_wave(config: &WaveConfig) -> Result<Sequence> {
    config.validate()?;
    let (h, w, t_steps) = (config.height, config.width, config.steps);
    let hw = h * w;
    let r2 = config.courant() * config.courant();
    let (ci, cj) = config.source;
    let two_sigma2 = 2.0 * config.pulse_sigma * config.pulse_sigma;

    let mut u0 = vec![0.0; hw];
    for i in 0..h {
        for j in 0..w {
            let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
            u0[i * w + j] = config.amplitude * (-d2 / two_sigma2).exp();
        }
    }

    let mut seq = Sequence::zeros(t_steps, h, w);
    seq.values[..hw].copy_from_slice(&u0);
    // Zero initial velocity: u^{-1} = u^0.
    let mut prev = u0.clone();
    let mut curr = u0;
    let mut next = vec![0.0; hw];
    for t in 1..t_steps {
        for i in 0..h {
            for j in 0..w {
                let idx = i * w + j;
                let up = if i > 0 { curr[idx - w] } else { 0.0 };
                let down = if i + 1 < h { curr[idx + w] } else { 0.0 };
                let left = if j > 0 { curr[idx - 1] } else { 0.0 };
                let right = if j + 1 < w { curr[idx + 1] } else { 0.0 };
                let lap = (left + right) + (up + down) - 4.0 * curr[idx];
                next[idx] = 2.0 * curr[idx] - prev[idx] + r2 * lap;
            }
        }
        seq.values[t * hw..(t + 1) * hw].copy_from_slice(&next);
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }

    let max_abs = seq.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        for v in &mut seq.values {
            *v /= max_abs;
        }
    }
    Ok(seq)
}

/// Root mean square amplitude over every value of the sequence.
pub fn rmsa(seq: &Sequence) -> f64 {
    let n = seq.values.len() as f64;
    (seq.values.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
}

/// Calibrated additive noise: target signal-to-noise ratio in RMSA terms.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub target_snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(target_snr: f64, seed: u64) -> Self {
        NoiseSpec { target_snr, seed }
    }
}

/// Adds zero-mean Gaussian noise with std `rmsa(seq) / target_snr` to every
/// value. The RMS of zero-mean Gaussian noise equals its std, so the measured
/// SNR `rmsa(signal) / rmsa(noise)` hits the target in expectation.
pub fn add_noise(seq: &Sequence, spec: &NoiseSpec) -> Result<Sequence> {
    if spec.target_snr <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "target SNR must be positive, got {}",
            spec.target_snr
        )));
    }
    let signal_rmsa = rmsa(seq);
    if signal_rmsa <= 0.0 {
        return Err(Error::InvalidConfig(
            "add_noise requires a signal with nonzero power".into(),
        ));
    }
    let std = signal_rmsa / spec.target_snr;
    let mut gauss = Gaussian::new(spec.seed);
    let mut out = seq.clone();
    for v in &mut out.values {
        *v += std * gauss.sample();
    }
    Ok(out)
}

/// Clean training/test sequences with per-sequence random interior sources.
pub fn make_dataset(n_sequences: usize, template: &WaveConfig, seed: u64) -> Result<Vec<Sequence>> {
    if n_sequences < 1 {
        return Err(Error::InvalidConfig("dataset needs at least 1 sequence".into()));
    }
    let mut out = Vec::with_capacity(n_sequences);
    for idx in 0..n_sequences {
        let mut cfg = template.clone();
        cfg.seed = derive_seed(seed, 0x5747, idx as u64);
        let mut rng = rng_from_seed(cfg.seed);
        let lo_i = 1.0;
        let hi_i = (cfg.height - 2) as f64;
        let lo_j = 1.0;
        let hi_j = (cfg.width - 2) as f64;
        cfg.source = (
            rng.random_range(lo_i..=hi_i),
            rng.random_range(lo_j..=hi_j),
        );
        out.push(simulate_wave(&cfg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_source_gives_all_zero_sequence() {
        let cfg = WaveConfig {
            amplitude: 0.0,
            ..WaveConfig::default()
        };
        let seq = simulate_wave(&cfg).unwrap();
        assert!(seq.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn doubling_amplitude_doubles_raw_values() {
        // The update rule is linear; normalization divides the doubling away,
        // so compare the unnormalized effect via two different amplitudes at
        // matched normalization: normalized outputs must be identical.
        let cfg1 = WaveConfig::default();
        let cfg2 = WaveConfig {
            amplitude: 2.0,
            ..WaveConfig::default()
        };
        let s1 = simulate_wave(&cfg1).unwrap();
        let s2 = simulate_wave(&cfg2).unwrap();
        for (a, b) in s1.values.iter().zip(&s2.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_matches_hand_applied_leapfrog() {
        // 3x3 grid, unit impulse at center, r = 0.5, one step:
        // center: 2*1 - 1 + 0.25*(0+0+0+0 - 4*1) = 0.0
        // edge-adjacent neighbors: 0 - 0 + 0.25*(1 - 0) = 0.25
        let cfg = WaveConfig {
            height: 3,
            width: 3,
            steps: 2,
            wave_speed: 0.5,
            source: (1.0, 1.0),
            pulse_sigma: 1e-6, // effectively a single-pixel impulse
            amplitude: 1.0,
            ..WaveConfig::default()
        };
        // Bypass normalization concerns: raw dynamics before normalization
        // put max|u| at frame 0 center = 1, so normalization is identity.
        let seq = simulate_wave(&cfg).unwrap();
        assert!((seq.at(0, 1, 1) - 1.0).abs() < 1e-12);
        assert!(seq.at(1, 1, 1).abs() < 1e-12);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert!((seq.at(1, i, j) - 0.25).abs() < 1e-12, "at ({i},{j})");
        }
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert!(seq.at(1, i, j).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let cfg = WaveConfig {
            wave_speed: 0.8,
            ..WaveConfig::default()
        };
        assert!(simulate_wave(&cfg).is_err());
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let base = WaveConfig {
            steps: 60,
            source: (5.0, 3.25),
            ..WaveConfig::default()
        };
        let mirrored = WaveConfig {
            source: (5.0, (base.width - 1) as f64 - 3.25),
            ..base.clone()
        };
        let a = simulate_wave(&base).unwrap();
        let b = simulate_wave(&mirrored).unwrap();
        for t in 0..a.t {
            for i in 0..a.h {
                for j in 0..a.w {
                    assert_eq!(
                        a.at(t, i, j).to_bits(),
                        b.at(t, i, a.w - 1 - j).to_bits(),
                        "mismatch at ({t},{i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn energy_stays_bounded_under_cfl() {
        let cfg = WaveConfig {
            steps: 300,
            source: (4.0, 11.0),
            ..WaveConfig::default()
        };
        let seq = simulate_wave(&cfg).unwrap();
        let hw = cfg.height * cfg.width;
        let energy = |t: usize| -> f64 { seq.frame(t).iter().map(|v| v * v).sum() };
        let early: f64 = (0..10).map(&energy).fold(0.0, f64::max);
        for t in 0..cfg.steps {
            assert!(energy(t).is_finite());
            assert!(energy(t) < 50.0 * early.max(1e-12) * hw as f64, "blow-up at t={t}");
        }
    }

    #[test]
    fn probe_cell_is_quiet_before_wavefront_arrival_then_active() {
        let cfg = WaveConfig {
            height: 16,
            width: 16,
            steps: 150,
            source: (13.0, 13.0),
            ..WaveConfig::default()
        };
        let seq = simulate_wave(&cfg).unwrap();
        let probe = (2usize, 2usize);
        // The 4-neighbor stencil's domain of dependence grows one Manhattan
        // ring per step; the source pulse tails span about two cells at the
        // 1e-9 level, so the probe stays quiet until manhattan - 2 steps.
        let manhattan = (13 - probe.0) + (13 - probe.1);
        let before = manhattan - 2;
        let series = seq.cell_series(probe.0, probe.1);
        let max_before = series[..before].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_after = series[before..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max_before < 1e-9, "precursor amplitude {max_before}");
        assert!(max_after > 0.05, "wave never arrived: {max_after}");
    }

    #[test]
    fn rmsa_formula_cases() {
        let mut s = Sequence::zeros(2, 2, 2);
        assert_eq!(rmsa(&s), 0.0);
        s.values = vec![2.0; 8];
        assert_eq!(rmsa(&s), 2.0);
        let s2 = Sequence {
            t: 2,
            h: 1,
            w: 1,
            values: vec![3.0, 4.0],
        };
        assert!((rmsa(&s2) - 12.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_hits_target_snr_within_one_percent() {
        let cfg = WaveConfig {
            steps: 150,
            source: (9.0, 6.0),
            ..WaveConfig::default()
        };
        let clean = simulate_wave(&cfg).unwrap();
        for (snr, seed) in [(0.25, 1u64), (4.0, 2), (100.0, 3)] {
            let noisy = add_noise(&clean, &NoiseSpec::new(snr, seed)).unwrap();
            let noise_only = Sequence {
                t: clean.t,
                h: clean.h,
                w: clean.w,
                values: noisy
                    .values
                    .iter()
                    .zip(&clean.values)
                    .map(|(n, c)| n - c)
                    .collect(),
            };
            let measured = rmsa(&clean) / rmsa(&noise_only);
            assert!(
                (measured - snr).abs() / snr < 0.01,
                "target {snr}, measured {measured}"
            );
        }
    }

    #[test]
    fn near_noise_free_case_barely_perturbs() {
        let clean = simulate_wave(&WaveConfig::default()).unwrap();
        let noisy = add_noise(&clean, &NoiseSpec::new(1e5, 5)).unwrap();
        let sigma = rmsa(&clean) / 1e5;
        for (n, c) in noisy.values.iter().zip(&clean.values) {
            assert!((n - c).abs() < 10.0 * sigma);
        }
    }

    #[test]
    fn noise_is_deterministic_under_seed() {
        let clean = simulate_wave(&WaveConfig::default()).unwrap();
        let a = add_noise(&clean, &NoiseSpec::new(2.0, 9)).unwrap();
        let b = add_noise(&clean, &NoiseSpec::new(2.0, 9)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn add_noise_rejects_zero_power_signal() {
        let zeros = Sequence::zeros(4, 4, 4);
        assert!(add_noise(&zeros, &NoiseSpec::new(1.0, 0)).is_err());
    }

    #[test]
    fn dataset_shapes_and_reproducibility() {
        let template = WaveConfig {
            steps: 40,
            ..WaveConfig::default()
        };
        let a = make_dataset(10, &template, 77).unwrap();
        assert_eq!(a.len(), 10);
        for s in &a {
            assert_eq!((s.t, s.h, s.w), (40, 16, 16));
        }
        let b = make_dataset(10, &template, 77).unwrap();
        assert_eq!(a, b);
        // Different sources per sequence.
        assert_ne!(a[0].values, a[1].values);
    }
}
