//! Gradient checks shared by the gradient suites and the acceptance run.
//! Each returns the worst relative error for one seed.

use super::{max_relative_error, numeric_gradient, project};
use vaessl::ndcore::{Matrix, RngState};
use vaessl::nn::{relu, relu_backward, BatchNorm, CellKind, Dense, GruCell, Mode, Module, RecurrentStack, RnnCell};
use vaessl::vae::{Noise, VaeModel};

pub fn random_sequence(rng: &mut RngState, t: usize, width: usize, batch: usize) -> Vec<Matrix> {
    (0..t).map(|_| rng.randn(width, batch)).collect()
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut layer = Dense::new(5, 4, &mut rng);
    layer.b = rng.randn(4, 1);
    let x = rng.randn(5, 3);
    let proj = rng.randn(4, 3);

    let (_, cache) = layer.forward(&x).unwrap();
    let (dx, g) = layer.backward(cache, &proj).unwrap();
    let analytic = vec![g.w, g.b, dx];

    let numeric = numeric_gradient(
        &(layer.clone(), x.clone()),
        3,
        |p, i| match i {
            0 => &mut p.0.w,
            1 => &mut p.0.b,
            _ => &mut p.1,
        },
        |p| project(&[p.0.infer(&p.1).unwrap()], std::slice::from_ref(&proj)),
    );
    max_relative_error(&analytic, &numeric)
}

pub fn relu_layer(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    // keep entries away from the kink
    let x = rng.randn(6, 4).map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    let proj = rng.randn(6, 4);
    let (_, cache) = relu(&x);
    let dx = relu_backward(cache, &proj).unwrap();
    let numeric = numeric_gradient(&x, 1, |p, _| p, |p| project(&[relu(p).0], std::slice::from_ref(&proj)));
    max_relative_error(&[dx], &numeric)
}

pub fn rnn(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut cell = RnnCell::new(3, 5, &mut rng);
    cell.b = rng.randn(5, 1).scale(0.5);
    let t = 4;
    let xs = random_sequence(&mut rng, t, 3, 2);
    let s0 = rng.randn(5, 2).scale(0.5);
    let proj = random_sequence(&mut rng, t, 5, 2);

    let (_, cache) = cell.forward(&xs, &s0).unwrap();
    let (dxs, ds0, g) = cell.backward(cache, &proj).unwrap();
    let mut analytic = g.into_vec();
    analytic.extend(dxs);
    analytic.push(ds0);

    let base = (cell.clone(), xs.clone(), s0.clone());
    let numeric = numeric_gradient(
        &base,
        3 + t + 1,
        |p, i| match i {
            0 => &mut p.0.u,
            1 => &mut p.0.w,
            2 => &mut p.0.b,
            i if i < 3 + t => &mut p.1[i - 3],
            _ => &mut p.2,
        },
        |p| project(&p.0.forward(&p.1, &p.2).unwrap().0, &proj),
    );
    max_relative_error(&analytic, &numeric)
}

pub fn gru(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut cell = GruCell::new(4, 6, &mut rng);
    cell.update.b = rng.randn(6, 1).scale(0.5);
    cell.reset.b = rng.randn(6, 1).scale(0.5);
    cell.candidate.b = rng.randn(6, 1).scale(0.5);
    let t = 5;
    let xs = random_sequence(&mut rng, t, 4, 3);
    let h0 = rng.randn(6, 3).scale(0.5);
    let proj = random_sequence(&mut rng, t, 6, 3);

    let (_, cache) = cell.forward(&xs, &h0).unwrap();
    let (dxs, dh0, g) = cell.backward(cache, &proj).unwrap();
    let mut analytic = g.into_vec();
    analytic.extend(dxs);
    analytic.push(dh0);

    let base = (cell.clone(), xs.clone(), h0.clone());
    let numeric = numeric_gradient(
        &base,
        9 + t + 1,
        |p, i| {
            if i < 9 {
                let gate = match i / 3 {
                    0 => &mut p.0.update,
                    1 => &mut p.0.reset,
                    _ => &mut p.0.candidate,
                };
                match i % 3 {
                    0 => &mut gate.u,
                    1 => &mut gate.w,
                    _ => &mut gate.b,
                }
            } else if i < 9 + t {
                &mut p.1[i - 9]
            } else {
                &mut p.2
            }
        },
        |p| project(&p.0.forward(&p.1, &p.2).unwrap().0, &proj),
    );
    max_relative_error(&analytic, &numeric)
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for mode in [Mode::Train, Mode::Eval] {
        let mut rng = RngState::new(seed);
        let mut bn = BatchNorm::new(4);
        bn.gain = rng.randn(4, 1);
        bn.shift = rng.randn(4, 1);
        bn.running_mean = rng.randn(4, 1);
        bn.running_var = rng.randn(4, 1).map(|v| v * v + 0.5);
        let x = rng.randn(4, 6);
        let proj = rng.randn(4, 6);

        let (_, cache) = bn.clone().forward(&x, mode).unwrap();
        let (dx, g) = bn.backward(cache, &proj).unwrap();
        let analytic = vec![g.gain, g.shift, dx];

        let numeric = numeric_gradient(
            &(bn.clone(), x.clone()),
            3,
            |p, i| match i {
                0 => &mut p.0.gain,
                1 => &mut p.0.shift,
                _ => &mut p.1,
            },
            |p| {
                let mut layer = p.0.clone();
                let y = layer.forward(&p.1, mode).unwrap().0;
                project(&[y], std::slice::from_ref(&proj))
            },
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

pub fn stack(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for kind in [CellKind::Rnn, CellKind::Gru] {
        let mut rng = RngState::new(seed);
        let stack = RecurrentStack::new(kind, &[3, 5, 4], &[true, false], &mut rng);
        let t = 3;
        let xs = random_sequence(&mut rng, t, 3, 4);
        let proj = random_sequence(&mut rng, t, 4, 4);

        let (_, cache) = stack.clone().forward(&xs, Mode::Train).unwrap();
        let (dxs, mut analytic) = stack.backward(cache, &proj).unwrap();
        analytic.extend(dxs);

        let n_params = stack.params().len();
        let numeric = numeric_gradient(
            &(stack.clone(), xs.clone()),
            n_params + t,
            |p, i| {
                if i < n_params {
                    p.0.params_mut().into_iter().nth(i).unwrap()
                } else {
                    &mut p.1[i - n_params]
                }
            },
            |p| {
                let mut s = p.0.clone();
                project(&s.forward(&p.1, Mode::Train).unwrap().0, &proj)
            },
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Full weighted VAE loss at a toy shape with fixed noise.
pub fn vae_loss(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut model = VaeModel::with_widths(&[3, 2, 2], 2, &[2, 2], &mut rng);
    for bn in model
        .encoder
        .norms
        .iter_mut()
        .chain(model.decoder.norms.iter_mut())
        .flatten()
    {
        bn.gain = rng.randn(2, 1).map(|v| 1.0 + 0.3 * v);
        bn.shift = rng.randn(2, 1).scale(0.3);
    }
    let (t, b) = (3, 4);
    let xs = random_sequence(&mut rng, t, 3, b);
    let eps = random_sequence(&mut rng, t, 2, b);
    let alpha = 10.0;

    let (_, analytic) = model
        .clone()
        .elbo_grad(&xs, Noise::Fixed(&eps), alpha, Mode::Train)
        .unwrap();
    let n = model.params().len();
    assert_eq!(analytic.len(), n);
    let numeric = numeric_gradient(
        &model,
        n,
        |m, i| m.params_mut().into_iter().nth(i).unwrap(),
        |m| {
            m.clone()
                .elbo(&xs, Noise::Fixed(&eps), alpha, Mode::Train)
                .unwrap()
                .weighted_total
        },
    );
    max_relative_error(&analytic, &numeric)
}
