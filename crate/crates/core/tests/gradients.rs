//! Finite-difference validation of the analytic gradients, model by model.

use wavelab::autodiff::{finite_difference_check, Tape, TensorId};
use wavelab::model::{bind_zero_state, Model, ModelKind};
use wavelab::rng::splitmix64;

const TOL: f64 = 1e-4;

fn pseudo(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = splitmix64(state);
            (state as f64 / u64::MAX as f64 * 2.0 - 1.0) * scale
        })
        .collect()
}

/// One-step loss for a model whose parameters come in as leaves; one warmup
/// input precedes the scored step so recurrent paths carry signal, and the
/// loss covers the prediction plus every new state tensor so each parameter
/// keeps a live path to the scalar (near-zero true gradients would otherwise
/// drown the relative comparison in finite-difference noise).
fn one_step_loss(
    model: &dyn Model,
    tape: &mut Tape,
    params: &[TensorId],
) -> wavelab::Result<TensorId> {
    let (h, w) = model.grid();
    let hw = h * w;
    let state = bind_zero_state(model, tape);
    let warm = tape.leaf(model.input_shape(), pseudo(hw, 0xAA, 0.8), false);
    let (_, state) = model.step_on_tape(tape, params, &state, warm)?;
    let input = tape.leaf(model.input_shape(), pseudo(hw, 0xBB, 0.8), false);
    let (out, new_state) = model.step_on_tape(tape, params, &state, input)?;
    let mut scored = vec![out];
    scored.extend(new_state);
    let mut loss = None;
    for (i, part) in scored.into_iter().enumerate() {
        let shape = tape.shape(part).to_vec();
        let n = tape.tensor(part).numel();
        let target = tape.leaf(shape, pseudo(n, 0xC0 + i as u64, 0.4), false);
        let term = tape.mse(part, target)?;
        loss = Some(match loss {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    // Small loss scale keeps the finite-difference roundoff noise well under
    // the 1e-8 relative floor; live coordinates are unaffected by scaling.
    Ok(tape.scale(loss.unwrap(), 0.01))
}

fn check_model(kind: ModelKind) {
    let model = kind.build(4, 4, 2024).unwrap();
    let params: Vec<(Vec<usize>, Vec<f64>)> = {
        let mut offset = 0;
        model
            .param_layout()
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = model.params()[offset..offset + n].to_vec();
                offset += n;
                (shape.clone(), data)
            })
            .collect()
    };
    let err = finite_difference_check(|tape, ids| one_step_loss(model.as_ref(), tape, ids), &params)
        .unwrap();
    assert!(err < TOL, "{}: max rel err {err}", kind.id());
}

#[test]
fn distana4_one_step_gradients() {
    check_model(ModelKind::Distana4);
}

#[test]
fn distana24_one_step_gradients() {
    check_model(ModelKind::Distana24);
}

#[test]
fn convlstm2_one_step_gradients() {
    check_model(ModelKind::ConvLstm2);
}

#[test]
fn convlstm8_one_step_gradients() {
    check_model(ModelKind::ConvLstm8);
}

#[test]
fn tcn121_one_step_gradients() {
    check_model(ModelKind::Tcn121);
}

#[test]
fn tcn191_one_step_gradients() {
    check_model(ModelKind::Tcn191);
}

#[test]
fn lstm_step_mse_gradients() {
    // A bias-free LSTM step spelled out in raw ops.
    let m = 3;
    let z_len = m + 2;
    let gates: Vec<(Vec<usize>, Vec<f64>)> = (0..4)
        .map(|g| (vec![m, z_len], pseudo(m * z_len, 0x10 + g, 0.7)))
        .collect();
    let err = finite_difference_check(
        |tape, ids| {
            let x = tape.leaf(vec![2, 1], pseudo(2, 0x77, 0.8), false);
            let h0 = tape.leaf(vec![m, 1], pseudo(m, 0x78, 0.5), false);
            let c0 = tape.leaf(vec![m, 1], pseudo(m, 0x79, 0.5), false);
            let z = tape.concat(&[x, h0])?;
            let gi_lin = tape.matmul(ids[0], z)?;
            let gf_lin = tape.matmul(ids[1], z)?;
            let gc_lin = tape.matmul(ids[2], z)?;
            let go_lin = tape.matmul(ids[3], z)?;
            let i = tape.sigmoid(gi_lin);
            let f = tape.sigmoid(gf_lin);
            let g = tape.tanh(gc_lin);
            let o = tape.sigmoid(go_lin);
            let keep = tape.mul(f, c0)?;
            let write = tape.mul(i, g)?;
            let c1 = tape.add(keep, write)?;
            let c_act = tape.tanh(c1);
            let h1 = tape.mul(o, c_act)?;
            let target = tape.leaf(vec![m, 1], pseudo(m, 0x7A, 0.3), false);
            tape.mse(h1, target)
        },
        &gates,
    )
    .unwrap();
    assert!(err < TOL, "max rel err {err}");
}

#[test]
fn distana4_multi_step_bptt_gradients() {
    // Five teacher-forced steps so gradients flow through the recurrent
    // state and the lateral exchange.
    let model = ModelKind::Distana4.build(4, 4, 77).unwrap();
    let params: Vec<(Vec<usize>, Vec<f64>)> = {
        let mut offset = 0;
        model
            .param_layout()
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = model.params()[offset..offset + n].to_vec();
                offset += n;
                (shape.clone(), data)
            })
            .collect()
    };
    let err = finite_difference_check(
        |tape, ids| {
            let frames: Vec<TensorId> = (0..5)
                .map(|t| tape.leaf(vec![1, 16], pseudo(16, 0x200 + t, 0.8), false))
                .collect();
            let mut state = bind_zero_state(model.as_ref(), tape);
            let mut scored = Vec::new();
            for &f in &frames {
                let (out, next) = model.step_on_tape(tape, ids, &state, f)?;
                scored.push(out);
                state = next;
            }
            scored.extend(state);
            let mut loss = None;
            for (i, part) in scored.into_iter().enumerate() {
                let shape = tape.shape(part).to_vec();
                let n = tape.tensor(part).numel();
                let target = tape.leaf(shape, pseudo(n, 0x300 + i as u64, 0.4), false);
                let term = tape.mse(part, target)?;
                loss = Some(match loss {
                    None => term,
                    Some(acc) => tape.add(acc, term)?,
                });
            }
            Ok(tape.scale(loss.unwrap(), 0.01))
        },
        &params,
    )
    .unwrap();
    assert!(err < TOL, "max rel err {err}");
}

#[test]
fn input_gradients_with_frozen_weights() {
    // The active-tuning route: gradients reach the inputs while parameters
    // are plain non-grad leaves.
    let model = ModelKind::Distana4.build(4, 4, 99).unwrap();
    let window: Vec<(Vec<usize>, Vec<f64>)> = (0..3)
        .map(|t| (vec![1, 16], pseudo(16, 0x400 + t, 0.5)))
        .collect();
    let err = finite_difference_check(
        |tape, ids| {
            let params = wavelab::model::bind_params(model.as_ref(), tape, false);
            let outs = model.teacher_forced_outputs(tape, &params, ids)?;
            let stacked = tape.concat(&outs)?;
            let shape = tape.shape(stacked).to_vec();
            let n = tape.tensor(stacked).numel();
            let target = tape.leaf(shape, pseudo(n, 0x500, 0.4), false);
            tape.mse(stacked, target)
        },
        &window,
    )
    .unwrap();
    assert!(err < TOL, "max rel err {err}");
}
