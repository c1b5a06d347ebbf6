use wavelab::autodiff::{finite_difference_check, Tape, TensorId};
use wavelab::model::{bind_zero_state, Model, ModelKind};
use wavelab::rng::splitmix64;

fn pseudo(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut state = seed;
    (0..n).map(|_| { state = splitmix64(state); (state as f64 / u64::MAX as f64 * 2.0 - 1.0) * scale }).collect()
}

fn one_step_loss(model: &dyn Model, tape: &mut Tape, params: &[TensorId]) -> wavelab::Result<TensorId> {
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
        loss = Some(match loss { None => term, Some(acc) => tape.add(acc, term)? });
    }
    Ok(tape.scale(loss.unwrap(), 0.01))
}

fn main() {
    for kind in ModelKind::ALL {
        let model = kind.build(4, 4, 2024).unwrap();
        let params: Vec<(Vec<usize>, Vec<f64>)> = {
            let mut offset = 0;
            model.param_layout().iter().map(|shape| {
                let n: usize = shape.iter().product();
                let d = model.params()[offset..offset + n].to_vec();
                offset += n;
                (shape.clone(), d)
            }).collect()
        };
        let err = finite_difference_check(|tape, ids| one_step_loss(model.as_ref(), tape, ids), &params).unwrap();
        println!("{}: {err:.3e}", kind.id());
    }
}
