//! DISTANA: one shared Prediction Kernel instantiated at every grid cell,
//! exchanging one-step-delayed lateral values with its 8-neighborhood.
//!
//! A PK is a bias-free stack: a 4-unit tanh preprocessing layer over the
//! concatenated dynamic and lateral inputs, an LSTM layer with `m` cells,
//! and a 9-unit tanh postprocessing layer whose first component is the
//! dynamic prediction and whose remaining 8 components are the lateral
//! outputs, one per compass direction.

use std::sync::Arc;

use crate::autodiff::{sigmoid, GatherMap, Tape, TensorId};
use crate::error::{Error, Result};
use crate::model::{init_params, Model};

pub const PRE_UNITS: usize = 4;
pub const DYNAMIC_IN: usize = 1;
pub const LATERAL_IN: usize = 8;
pub const DYNAMIC_OUT: usize = 1;
pub const LATERAL_OUT: usize = 8;

/// Compass directions in slot order: N, NE, E, SE, S, SW, W, NW.
pub const DIRECTIONS: [(i32, i32); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// Direction pointing back at the sender.
pub fn opposite(dir: usize) -> usize {
    (dir + 4) % 8
}

/// Prediction-kernel size: everything is fixed except the LSTM width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PkConfig {
    pub lstm_cells: usize,
}

impl PkConfig {
    pub fn new(lstm_cells: usize) -> Self {
        PkConfig { lstm_cells }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm_cells == 0 {
            return Err(Error::InvalidConfig(
                "prediction kernel needs at least one LSTM cell".into(),
            ));
        }
        Ok(())
    }

    /// Closed-form trainable scalar count.
    pub fn param_count(&self) -> usize {
        let m = self.lstm_cells;
        let inputs = DYNAMIC_IN + LATERAL_IN;
        let outputs = DYNAMIC_OUT + LATERAL_OUT;
        inputs * PRE_UNITS + 4 * (PRE_UNITS + m) * m + m * outputs
    }
}

/// HxW cell grid with per-cell neighbor lists over the 8 compass directions.
#[derive(Debug, Clone)]
pub struct GridTopology {
    pub height: usize,
    pub width: usize,
    neighbors: Vec<[Option<usize>; 8]>,
}

impl GridTopology {
    pub fn new(height: usize, width: usize) -> Self {
        let mut neighbors = Vec::with_capacity(height * width);
        for i in 0..height as i32 {
            for j in 0..width as i32 {
                let mut cell = [None; 8];
                for (d, (di, dj)) in DIRECTIONS.iter().enumerate() {
                    let (ni, nj) = (i + di, j + dj);
                    if ni >= 0 && nj >= 0 && ni < height as i32 && nj < width as i32 {
                        cell[d] = Some((ni as usize) * width + nj as usize);
                    }
                }
                neighbors.push(cell);
            }
        }
        GridTopology {
            height,
            width,
            neighbors,
        }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn neighbor(&self, cell: usize, dir: usize) -> Option<usize> {
        self.neighbors[cell][dir]
    }

    /// Index map routing lateral outputs to next-step lateral inputs, both
    /// laid out as 8 x cells row-major (slot-major rows).
    ///
    /// Cell i's input slot for direction D reads the component opposite(D)
    /// of its neighbor in direction D: the value that neighbor emitted
    /// toward i. Absent neighbors read zero.
    pub fn lateral_gather_map(&self) -> GatherMap {
        let k = self.cells();
        let mut map = Vec::with_capacity(LATERAL_IN * k);
        for dir in 0..LATERAL_IN {
            for cell in 0..k {
                map.push(
                    self.neighbor(cell, dir)
                        .map(|n| opposite(dir) * k + n),
                );
            }
        }
        Arc::from(map.into_boxed_slice())
    }
}

/// Routes the previous step's lateral outputs (8 x cells) into per-cell
/// lateral input vectors (8 x cells). Plain-buffer counterpart of the tape
/// gather used by the model, sharing the same index map.
pub fn gather_lateral(topo: &GridTopology, lateral_out: &[f64]) -> Vec<f64> {
    let map = topo.lateral_gather_map();
    map.iter()
        .map(|s| s.map(|i| lateral_out[i]).unwrap_or(0.0))
        .collect()
}

/// Weight views into the flat parameter vector, in checkpoint order:
/// W_pre row-major, then the LSTM gate matrices (input, forget, cell,
/// output) each row-major, then W_post row-major.
pub struct PkWeights<'a> {
    pub w_pre: &'a [f64],
    pub gates: [&'a [f64]; 4],
    pub w_post: &'a [f64],
    pub lstm_cells: usize,
}

impl<'a> PkWeights<'a> {
    pub fn split(config: &PkConfig, flat: &'a [f64]) -> Self {
        let m = config.lstm_cells;
        let inputs = DYNAMIC_IN + LATERAL_IN;
        let outputs = DYNAMIC_OUT + LATERAL_OUT;
        let n_pre = PRE_UNITS * inputs;
        let n_gate = m * (PRE_UNITS + m);
        let (w_pre, rest) = flat.split_at(n_pre);
        let (gi, rest) = rest.split_at(n_gate);
        let (gf, rest) = rest.split_at(n_gate);
        let (gc, rest) = rest.split_at(n_gate);
        let (go, rest) = rest.split_at(n_gate);
        let (w_post, rest) = rest.split_at(outputs * m);
        debug_assert!(rest.is_empty());
        PkWeights {
            w_pre,
            gates: [gi, gf, gc, go],
            w_post,
            lstm_cells: m,
        }
    }
}

/// Single-cell prediction-kernel step on plain buffers. Reference path used
/// by tests to pin the semantics of the batched grid step.
pub fn pk_step(
    config: &PkConfig,
    flat_params: &[f64],
    d_in: f64,
    l_in: &[f64; 8],
    h: &[f64],
    c: &[f64],
) -> (f64, [f64; 8], Vec<f64>, Vec<f64>) {
    let m = config.lstm_cells;
    let w = PkWeights::split(config, flat_params);

    let mut x = [0.0; DYNAMIC_IN + LATERAL_IN];
    x[0] = d_in;
    x[1..].copy_from_slice(l_in);

    let mut pre = [0.0; PRE_UNITS];
    for (u, p) in pre.iter_mut().enumerate() {
        let row = &w.w_pre[u * x.len()..(u + 1) * x.len()];
        *p = row.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>().tanh();
    }

    let mut z = Vec::with_capacity(PRE_UNITS + m);
    z.extend_from_slice(&pre);
    z.extend_from_slice(h);

    let gate = |mat: &[f64], cell: usize| -> f64 {
        let row = &mat[cell * z.len()..(cell + 1) * z.len()];
        row.iter().zip(&z).map(|(wi, zi)| wi * zi).sum()
    };

    let mut h_new = vec![0.0; m];
    let mut c_new = vec![0.0; m];
    for cell in 0..m {
        let i = sigmoid(gate(w.gates[0], cell));
        let f = sigmoid(gate(w.gates[1], cell));
        let g = gate(w.gates[2], cell).tanh();
        let o = sigmoid(gate(w.gates[3], cell));
        c_new[cell] = f * c[cell] + i * g;
        h_new[cell] = o * c_new[cell].tanh();
    }

    let outputs = DYNAMIC_OUT + LATERAL_OUT;
    let mut post = [0.0; DYNAMIC_OUT + LATERAL_OUT];
    for (u, p) in post.iter_mut().enumerate().take(outputs) {
        let row = &w.w_post[u * m..(u + 1) * m];
        *p = row
            .iter()
            .zip(&h_new)
            .map(|(wi, hi)| wi * hi)
            .sum::<f64>()
            .tanh();
    }
    let mut l_out = [0.0; 8];
    l_out.copy_from_slice(&post[1..]);
    (post[0], l_out, h_new, c_new)
}

/// The grid model: shared PK weights applied at every cell, cells batched
/// as columns of 2D tensors.
pub struct Distana {
    pub config: PkConfig,
    pub topo: GridTopology,
    params: Vec<f64>,
    layout: Vec<Vec<usize>>,
    gather_map: GatherMap,
    id: String,
}

impl Distana {
    pub fn new(config: PkConfig, height: usize, width: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = config.lstm_cells;
        let layout = vec![
            vec![PRE_UNITS, DYNAMIC_IN + LATERAL_IN],
            vec![m, PRE_UNITS + m],
            vec![m, PRE_UNITS + m],
            vec![m, PRE_UNITS + m],
            vec![m, PRE_UNITS + m],
            vec![DYNAMIC_OUT + LATERAL_OUT, m],
        ];
        let params = init_params(&layout, seed);
        debug_assert_eq!(params.len(), config.param_count());
        let topo = GridTopology::new(height, width);
        let gather_map = topo.lateral_gather_map();
        Ok(Distana {
            id: format!("distana{m}"),
            config,
            topo,
            params,
            layout,
            gather_map,
        })
    }

    /// One full grid step on plain buffers; returns the per-cell predictions
    /// and the new state.
    pub fn grid_step(
        &self,
        state: &crate::model::ModelState,
        dynamic_inputs: &[f64],
    ) -> Result<(Vec<f64>, crate::model::ModelState)> {
        crate::model::step_plain(self, state, dynamic_inputs)
    }
}

impl Model for Distana {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn grid(&self) -> (usize, usize) {
        (self.topo.height, self.topo.width)
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
        vec![self.config.lstm_cells as u32]
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![1, self.topo.cells()]
    }

    /// State tensors: LSTM hidden (m x k), LSTM cell (m x k), last lateral
    /// outputs (8 x k), last dynamic outputs (1 x k).
    fn state_shapes(&self) -> Vec<Vec<usize>> {
        let m = self.config.lstm_cells;
        let k = self.topo.cells();
        vec![vec![m, k], vec![m, k], vec![LATERAL_OUT, k], vec![DYNAMIC_OUT, k]]
    }

    fn step_on_tape(
        &self,
        tape: &mut Tape,
        params: &[TensorId],
        state: &[TensorId],
        input: TensorId,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let k = self.topo.cells();
        let [w_pre, w_i, w_f, w_c, w_o, w_post] = params else {
            return Err(Error::InvalidConfig("distana expects 6 parameter leaves".into()));
        };
        let [h_prev, c_prev, lat_prev, _d_prev] = state else {
            return Err(Error::InvalidConfig("distana expects 4 state tensors".into()));
        };

        // Previous-step lateral outputs routed to this step's inputs.
        let lat_in = tape.gather(
            *lat_prev,
            self.gather_map.clone(),
            vec![LATERAL_IN, k],
        )?;
        let x = tape.concat(&[input, lat_in])?;
        let pre_lin = tape.matmul(*w_pre, x)?;
        let pre = tape.tanh(pre_lin);

        let z = tape.concat(&[pre, *h_prev])?;
        let gi_lin = tape.matmul(*w_i, z)?;
        let gf_lin = tape.matmul(*w_f, z)?;
        let gc_lin = tape.matmul(*w_c, z)?;
        let go_lin = tape.matmul(*w_o, z)?;
        let gi = tape.sigmoid(gi_lin);
        let gf = tape.sigmoid(gf_lin);
        let gc = tape.tanh(gc_lin);
        let go = tape.sigmoid(go_lin);

        let keep = tape.mul(gf, *c_prev)?;
        let write = tape.mul(gi, gc)?;
        let c_new = tape.add(keep, write)?;
        let c_act = tape.tanh(c_new);
        let h_new = tape.mul(go, c_act)?;

        let post_lin = tape.matmul(*w_post, h_new)?;
        let post = tape.tanh(post_lin);
        let d_out = tape.slice_rows(post, 0, DYNAMIC_OUT)?;
        let l_out = tape.slice_rows(post, DYNAMIC_OUT, DYNAMIC_OUT + LATERAL_OUT)?;

        Ok((d_out, vec![h_new, c_new, l_out, d_out]))
    }
}
