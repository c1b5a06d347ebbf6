//! Stacked ConvLSTM baseline: per layer, the four gate pre-activations are
//! one 3x3 zero-padded convolution over the channel-concatenated input and
//! previous hidden state. No bias terms anywhere; the published parameter
//! counts (324 / 2,916) are only consistent with bias-free gates.

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::model::{init_params, Model};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLstmConfig {
    /// Hidden channels per layer; the last layer's hidden state is the
    /// prediction, so it must have one channel.
    pub hidden: Vec<usize>,
    pub kernel: usize,
}

impl ConvLstmConfig {
    pub fn new(hidden: Vec<usize>) -> Self {
        ConvLstmConfig { hidden, kernel: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("convlstm needs nonzero hidden channels".into()));
        }
        if *self.hidden.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(
                "convlstm's last layer must emit one channel".into(),
            ));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidConfig("convlstm kernel must be odd".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let mut in_ch = 1;
        let mut total = 0;
        for &hid in &self.hidden {
            total += 4 * k2 * (in_ch + hid) * hid;
            in_ch = hid;
        }
        total
    }
}

pub struct ConvLstm {
    pub config: ConvLstmConfig,
    height: usize,
    width: usize,
    params: Vec<f64>,
    layout: Vec<Vec<usize>>,
    id: String,
}

impl ConvLstm {
    pub fn new(config: ConvLstmConfig, height: usize, width: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut layout = Vec::new();
        let mut in_ch = 1;
        for &hid in &config.hidden {
            // One kernel producing all four gates, blocks ordered
            // input/forget/cell/output.
            layout.push(vec![4 * hid, in_ch + hid, k, k]);
            in_ch = hid;
        }
        let params = init_params(&layout, seed);
        debug_assert_eq!(params.len(), config.param_count());
        Ok(ConvLstm {
            id: format!("convlstm{}", config.hidden[0]),
            config,
            height,
            width,
            params,
            layout,
        })
    }
}

impl Model for ConvLstm {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn param_layout(&self) -> &[Vec<usize>] {
        &self.layout
    }

    fn config_ints(&self) -> Vec<u32> {
        self.config.hidden.iter().map(|&h| h as u32).collect()
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.height, self.width]
    }

    /// Per layer: hidden state then cell state, each `hid x H x W`.
    fn state_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for &hid in &self.config.hidden {
            shapes.push(vec![hid, self.height, self.width]);
            shapes.push(vec![hid, self.height, self.width]);
        }
        shapes
    }

    fn step_on_tape(
        &self,
        tape: &mut Tape,
        params: &[TensorId],
        state: &[TensorId],
        input: TensorId,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        if params.len() != self.config.hidden.len() || state.len() != 2 * params.len() {
            return Err(Error::InvalidConfig("convlstm leaf count mismatch".into()));
        }
        let mut x = input;
        let mut new_state = Vec::with_capacity(state.len());
        for (layer, &kernel) in params.iter().enumerate() {
            let hid = self.config.hidden[layer];
            let h_prev = state[2 * layer];
            let c_prev = state[2 * layer + 1];

            let stacked = tape.concat(&[x, h_prev])?;
            let gates = tape.conv2d(stacked, kernel)?;
            let gi_lin = tape.slice_rows(gates, 0, hid)?;
            let gf_lin = tape.slice_rows(gates, hid, 2 * hid)?;
            let gc_lin = tape.slice_rows(gates, 2 * hid, 3 * hid)?;
            let go_lin = tape.slice_rows(gates, 3 * hid, 4 * hid)?;
            let gi = tape.sigmoid(gi_lin);
            let gf = tape.sigmoid(gf_lin);
            let gc = tape.tanh(gc_lin);
            let go = tape.sigmoid(go_lin);

            let keep = tape.mul(gf, c_prev)?;
            let write = tape.mul(gi, gc)?;
            let c_new = tape.add(keep, write)?;
            let c_act = tape.tanh(c_new);
            let h_new = tape.mul(go, c_act)?;

            new_state.push(h_new);
            new_state.push(c_new);
            x = h_new;
        }
        Ok((x, new_state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid;
    use crate::model::{step_plain, ModelState};

    #[test]
    fn param_counts_match_published_sizes() {
        assert_eq!(ConvLstmConfig::new(vec![2, 1]).param_count(), 324);
        assert_eq!(ConvLstmConfig::new(vec![8, 1]).param_count(), 2_916);
        let m = ConvLstm::new(ConvLstmConfig::new(vec![2, 1]), 16, 16, 0).unwrap();
        assert_eq!(m.params().len(), 324);
        let m = ConvLstm::new(ConvLstmConfig::new(vec![8, 1]), 16, 16, 0).unwrap();
        assert_eq!(m.params().len(), 2_916);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = ConvLstm::new(ConvLstmConfig::new(vec![2, 1]), 4, 4, 1).unwrap();
        m.params_mut().fill(0.0);
        let state = ModelState::zeros(&m.state_shapes());
        let input: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let (pred, _) = step_plain(&m, &state, &input).unwrap();
        assert!(pred.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quiescent_without_input_at_any_horizon() {
        let m = ConvLstm::new(ConvLstmConfig::new(vec![2, 1]), 4, 4, 2).unwrap();
        let mut state = ModelState::zeros(&m.state_shapes());
        for _ in 0..50 {
            let (pred, next) = step_plain(&m, &state, &vec![0.0; 16]).unwrap();
            assert!(pred.iter().all(|v| *v == 0.0));
            state = next;
        }
    }

    #[test]
    fn single_pixel_single_channel_reduces_to_scalar_lstm() {
        // On a 1x1 grid only the kernel centers touch the pixel, so a
        // one-layer ConvLSTM step equals a scalar bias-free LSTM step.
        let config = ConvLstmConfig::new(vec![1]);
        let mut m = ConvLstm::new(config, 1, 1, 3).unwrap();
        // Kernel layout: [4 gates, in+hid=2, 3, 3]; set distinctive centers.
        let centers = [
            (0.31, -0.12), // input gate: (w_x, w_h)
            (0.44, 0.21),  // forget gate
            (-0.55, 0.37), // cell gate
            (0.18, 0.09),  // output gate
        ];
        m.params_mut().fill(0.0);
        for (gate, (wx, wh)) in centers.iter().enumerate() {
            // row-major [4, 2, 3, 3]: gate-major, then channel, then 3x3.
            m.params_mut()[(gate * 2) * 9 + 4] = *wx;
            m.params_mut()[(gate * 2 + 1) * 9 + 4] = *wh;
        }
        let h0 = 0.23;
        let c0 = -0.41;
        let x0 = 0.77;
        let state = ModelState(vec![
            (vec![1, 1, 1], vec![h0]),
            (vec![1, 1, 1], vec![c0]),
        ]);
        let (pred, next) = step_plain(&m, &state, &[x0]).unwrap();

        let i = sigmoid(centers[0].0 * x0 + centers[0].1 * h0);
        let f = sigmoid(centers[1].0 * x0 + centers[1].1 * h0);
        let g = (centers[2].0 * x0 + centers[2].1 * h0).tanh();
        let o = sigmoid(centers[3].0 * x0 + centers[3].1 * h0);
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();
        assert!((pred[0] - h1).abs() < 1e-12);
        assert!((next.0[1].1[0] - c1).abs() < 1e-12);
    }

    #[test]
    fn interior_translation_equivariance_of_one_step() {
        // Shifting a localized input by one cell shifts the output by one
        // cell away from the borders.
        let m = ConvLstm::new(ConvLstmConfig::new(vec![2, 1]), 12, 12, 9).unwrap();
        let state = ModelState::zeros(&m.state_shapes());
        let mut a = vec![0.0; 144];
        a[5 * 12 + 5] = 1.0;
        let mut b = vec![0.0; 144];
        b[5 * 12 + 6] = 1.0;
        let (pa, _) = step_plain(&m, &state, &a).unwrap();
        let (pb, _) = step_plain(&m, &state, &b).unwrap();
        for i in 2..10 {
            for j in 2..9 {
                assert!(
                    (pa[i * 12 + j] - pb[i * 12 + j + 1]).abs() < 1e-12,
                    "shift mismatch at ({i},{j})"
                );
            }
        }
    }
}
