//! Shared model interface for the prediction-kernel grid and the baselines.
//!
//! Every model is a pure function of a flat f64 parameter vector plus a
//! recurrent state. Steps are expressed as tape ops so the same forward code
//! serves training (BPTT), evaluation (no-grad) and input inference.

pub mod convlstm;
pub mod distana;
pub mod tcn;

use rand::Rng;

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Plain-buffer recurrent state: `(shape, data)` per state tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState(pub Vec<(Vec<usize>, Vec<f64>)>);

impl ModelState {
    pub fn zeros(shapes: &[Vec<usize>]) -> Self {
        ModelState(
            shapes
                .iter()
                .map(|s| (s.clone(), vec![0.0; s.iter().product()]))
                .collect(),
        )
    }
}

pub trait Model: Send + Sync {
    /// Stable identifier, e.g. "distana4"; stored in checkpoints.
    fn model_id(&self) -> &str;

    /// Grid the instance is bound to.
    fn grid(&self) -> (usize, usize);

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Shapes of the parameter leaves, in flat-vector order.
    fn param_layout(&self) -> &[Vec<usize>];

    /// Structural integers stored in the checkpoint container.
    fn config_ints(&self) -> Vec<u32>;

    /// Leading input frames a prediction needs before outputs are scored.
    fn min_context(&self) -> usize {
        0
    }

    /// Shape the model expects an input frame leaf to have.
    fn input_shape(&self) -> Vec<usize>;

    /// Shapes of the recurrent state tensors.
    fn state_shapes(&self) -> Vec<Vec<usize>>;

    /// One prediction step. Returns the output node (H*W values) and the new
    /// state nodes.
    fn step_on_tape(
        &self,
        tape: &mut Tape,
        params: &[TensorId],
        state: &[TensorId],
        input: TensorId,
    ) -> Result<(TensorId, Vec<TensorId>)>;

    /// Outputs of a full teacher-forced pass over `frames`. Entry `t` is the
    /// model's prediction after consuming frame `t`; entries before
    /// `min_context` may be unscorable and are skipped by callers.
    fn teacher_forced_outputs(
        &self,
        tape: &mut Tape,
        params: &[TensorId],
        frames: &[TensorId],
    ) -> Result<Vec<TensorId>> {
        let mut state = bind_zero_state(self, tape);
        let mut outputs = Vec::with_capacity(frames.len());
        for &f in frames {
            let (out, next) = self.step_on_tape(tape, params, &state, f)?;
            outputs.push(out);
            state = next;
        }
        Ok(outputs)
    }
}

pub fn param_count(model: &dyn Model) -> usize {
    model.params().len()
}

/// Registers the model parameters as tape leaves in layout order.
pub fn bind_params(model: &dyn Model, tape: &mut Tape, requires_grad: bool) -> Vec<TensorId> {
    let mut ids = Vec::new();
    let mut offset = 0;
    for shape in model.param_layout() {
        let n: usize = shape.iter().product();
        let data = model.params()[offset..offset + n].to_vec();
        ids.push(tape.leaf(shape.clone(), data, requires_grad));
        offset += n;
    }
    debug_assert_eq!(offset, model.params().len());
    ids
}

/// Flat gradient vector for parameters bound by [`bind_params`], zeros where
/// a leaf was never reached by backward.
pub fn param_grads_flat(model: &dyn Model, tape: &Tape, bound: &[TensorId]) -> Vec<f64> {
    let mut flat = Vec::with_capacity(model.params().len());
    for (&id, shape) in bound.iter().zip(model.param_layout()) {
        let n: usize = shape.iter().product();
        match tape.grad(id) {
            Some(g) => flat.extend_from_slice(g),
            None => flat.extend(std::iter::repeat(0.0).take(n)),
        }
    }
    flat
}

pub fn bind_zero_state(model: &(impl Model + ?Sized), tape: &mut Tape) -> Vec<TensorId> {
    model
        .state_shapes()
        .iter()
        .map(|s| tape.leaf(s.clone(), vec![0.0; s.iter().product()], false))
        .collect()
}

pub fn bind_state(model: &dyn Model, tape: &mut Tape, state: &ModelState) -> Vec<TensorId> {
    debug_assert_eq!(state.0.len(), model.state_shapes().len());
    state
        .0
        .iter()
        .map(|(shape, data)| tape.leaf(shape.clone(), data.clone(), false))
        .collect()
}

pub fn extract_state(tape: &Tape, ids: &[TensorId]) -> ModelState {
    ModelState(
        ids.iter()
            .map(|&id| (tape.shape(id).to_vec(), tape.value(id).to_vec()))
            .collect(),
    )
}

/// One no-grad prediction step on plain buffers; returns the predicted frame.
pub fn step_plain(
    model: &dyn Model,
    state: &ModelState,
    frame: &[f64],
) -> Result<(Vec<f64>, ModelState)> {
    let mut tape = Tape::new();
    let params = bind_params(model, &mut tape, false);
    let state_ids = bind_state(model, &mut tape, state);
    let input = tape.leaf(model.input_shape(), frame.to_vec(), false);
    let (out, next) = model.step_on_tape(&mut tape, &params, &state_ids, input)?;
    Ok((tape.value(out).to_vec(), extract_state(&tape, &next)))
}

/// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per leaf, where
/// fan_in is the product of the leaf's trailing dimensions.
pub fn init_params(layout: &[Vec<usize>], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut flat = Vec::new();
    for shape in layout {
        let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        for _ in 0..n {
            flat.push(rng.random_range(-bound..bound));
        }
    }
    flat
}

/// The six named variants of the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Distana4,
    Distana24,
    ConvLstm2,
    ConvLstm8,
    Tcn121,
    Tcn191,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Distana4,
        ModelKind::Distana24,
        ModelKind::ConvLstm2,
        ModelKind::ConvLstm8,
        ModelKind::Tcn121,
        ModelKind::Tcn191,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ModelKind::Distana4 => "distana4",
            ModelKind::Distana24 => "distana24",
            ModelKind::ConvLstm2 => "convlstm2",
            ModelKind::ConvLstm8 => "convlstm8",
            ModelKind::Tcn121 => "tcn121",
            ModelKind::Tcn191 => "tcn191",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.id() == name)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown model `{name}` (expected one of: {})",
                    ModelKind::ALL.map(|k| k.id()).join(", ")
                ))
            })
    }

    /// Constructs the variant with seeded initial weights on an HxW grid.
    pub fn build(&self, h: usize, w: usize, seed: u64) -> Result<Box<dyn Model>> {
        Ok(match self {
            ModelKind::Distana4 => Box::new(distana::Distana::new(
                distana::PkConfig::new(4),
                h,
                w,
                seed,
            )?),
            ModelKind::Distana24 => Box::new(distana::Distana::new(
                distana::PkConfig::new(24),
                h,
                w,
                seed,
            )?),
            ModelKind::ConvLstm2 => Box::new(convlstm::ConvLstm::new(
                convlstm::ConvLstmConfig::new(vec![2, 1]),
                h,
                w,
                seed,
            )?),
            ModelKind::ConvLstm8 => Box::new(convlstm::ConvLstm::new(
                convlstm::ConvLstmConfig::new(vec![8, 1]),
                h,
                w,
                seed,
            )?),
            ModelKind::Tcn121 => Box::new(tcn::Tcn::new(tcn::TcnConfig::new(2), h, w, seed)?),
            ModelKind::Tcn191 => Box::new(tcn::Tcn::new(tcn::TcnConfig::new(9), h, w, seed)?),
        })
    }
}
