use super::*;
use crate::model::{encode_requests, TrainSettings};
use crate::rng::{stream, SimRng, Stream};
use rand::SeedableRng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain-loop stacked LSTM over a single sequence, no dropout.
fn reference_stack(stack: &StackParams, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut seq = inputs.to_vec();
    for w in &stack.layers {
        let h = w.hidden();
        let (mut y, mut c) = (vec![0.0; h], vec![0.0; h]);
        let mut out = Vec::new();
        for x in &seq {
            let cat: Vec<f64> = y.iter().chain(x.iter()).cloned().collect();
            let k = cat.len();
            let gate = |m: &Tensor, b: &Tensor, j: usize| -> f64 {
                b.data()[j] + (0..k).map(|q| m.data()[j * k + q] * cat[q]).sum::<f64>()
            };
            let mut ny = vec![0.0; h];
            let mut nc = vec![0.0; h];
            for j in 0..h {
                let f = sig(gate(&w.w_f, &w.b_f, j));
                let i = sig(gate(&w.w_i, &w.b_i, j));
                let g = gate(&w.w_c, &w.b_c, j).tanh();
                let o = sig(gate(&w.w_o, &w.b_o, j));
                nc[j] = f * c[j] + i * g;
                ny[j] = o * nc[j].tanh();
            }
            y = ny;
            c = nc;
            out.push(y.clone());
        }
        seq = out;
    }
    seq
}

fn small_model(seed: u64) -> (LayerSpec, ModelParams) {
    let spec = LayerSpec::new(4, vec![5, 3, 4]).unwrap();
    let mut rng = stream(seed, Stream::Init);
    let mut p = ModelParams::init(&spec, &mut rng);
    // Larger weights than the default init make the check more sensitive.
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 3.0);
    }
    (spec, p)
}

fn cid(id: usize, n: usize) -> Option<ContentId> {
    Some(ContentId::new(id, n).unwrap())
}

#[test]
fn decoder_mirrors_encoder() {
    let spec = LayerSpec::new(12, vec![16, 8, 12]).unwrap();
    assert_eq!(spec.decoder_widths(), vec![8, 16, 12]);
    let d = LayerSpec::default_for(32).unwrap();
    assert_eq!(d.encoder_widths(), &[128, 64, 32]);
    assert_eq!(d.decoder_widths(), vec![64, 128, 32]);
    assert_eq!(LayerSpec::new(5, vec![5]).unwrap().decoder_widths(), vec![5]);
    assert!(LayerSpec::new(12, vec![16, 8, 10]).is_err());
    assert!(LayerSpec::new(12, vec![]).is_err());
}

#[test]
fn parameter_count_matches_gate_formula() {
    let spec = LayerSpec::new(12, vec![16, 8, 12]).unwrap();
    let p = ModelParams::zeros(&spec);
    let cell = |h: usize, i: usize| 4 * (h * (h + i) + h);
    let enc = cell(16, 12) + cell(8, 16) + cell(12, 8);
    let dec = cell(8, 12) + cell(16, 8) + cell(12, 16);
    assert_eq!(p.encoder.param_count(), enc);
    assert_eq!(p.param_count(), enc + dec);
    assert_eq!(p.named_tensors().len(), 6 * 8);
    assert_eq!(p.named_tensors()[0].0, "encoder.0.w_f");
    assert_eq!(p.layer_spec().unwrap(), spec);
}

#[test]
fn stack_forward_matches_reference_loops() {
    let (_, p) = small_model(3);
    let window = [cid(2, 4), None, cid(4, 4), cid(1, 4), cid(2, 4)];
    let steps = encode_requests(&window, 4).unwrap();
    let raw: Vec<Vec<f64>> = steps.iter().map(|t| t.data().to_vec()).collect();
    let mut rng = SimRng::seed_from_u64(0);

    let enc = encode_sequence(&p.encoder, &steps, 0.5, false, &mut rng).unwrap();
    let enc_ref = reference_stack(&p.encoder, &raw);
    for (a, b) in enc.0.iter().zip(&enc_ref) {
        for (x, y) in a.data().iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let rec = p.reconstruct(&steps, 0.5, false, &mut rng).unwrap();
    let rec_ref = reference_stack(&p.decoder, &enc_ref);
    for (a, b) in rec.iter().zip(&rec_ref) {
        for (x, y) in a.data().iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    let last = enc_ref.last().unwrap();
    let z: f64 = last.iter().map(|v| v.exp()).sum();
    let pred = predict_popularity(&p.encoder, &steps).unwrap();
    for (q, v) in pred.as_slice().iter().zip(last) {
        assert!((q - v.exp() / z).abs() < 1e-12);
    }
}

#[test]
fn batched_prediction_equals_single() {
    let (_, p) = small_model(4);
    let w1 = [cid(1, 4), cid(3, 4), None];
    let w2 = [None, cid(4, 4), cid(4, 4)];
    let batch = ModelParams::predict(&p.encoder, &[&w1, &w2]).unwrap();
    for (w, b) in [(&w1, &batch[0]), (&w2, &batch[1])] {
        let single = predict_popularity(&p.encoder, &encode_requests(w, 4).unwrap()).unwrap();
        for (x, y) in single.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

fn fd_check(dropout: f64, seed: u64) -> f64 {
    let (_, p) = small_model(seed);
    let w1 = [cid(2, 4), None, cid(3, 4), cid(1, 4)];
    let w2 = [cid(4, 4), cid(4, 4), None, cid(2, 4)];
    let steps = crate::model::one_hot_steps(&[&w1, &w2], 4).unwrap();
    let loss_at = |m: &ModelParams| {
        let mut r = SimRng::seed_from_u64(seed);
        m.loss_and_gradients_steps(&steps, dropout, true, &mut r).unwrap()
    };
    let (_, grads) = loss_at(&p);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let n_tensors = p.tensors().len();
    for ti in 0..n_tensors {
        let len = p.tensors()[ti].len();
        for j in (0..len).step_by(7) {
            let mut plus = p.clone();
            plus.tensors_mut()[ti].data_mut()[j] += eps;
            let mut minus = p.clone();
            minus.tensors_mut()[ti].data_mut()[j] -= eps;
            let num = (loss_at(&plus).0 - loss_at(&minus).0) / (2.0 * eps);
            let ana = grads.tensors()[ti].data()[j];
            let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let worst = fd_check(0.0, 11);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradient_with_fixed_dropout_mask_matches_finite_differences() {
    let worst = fd_check(0.35, 12);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn repeated_steps_reduce_reconstruction_loss() {
    let spec = LayerSpec::new(6, vec![10, 6]).unwrap();
    let mut rng = stream(5, Stream::Init);
    let mut p = ModelParams::init(&spec, &mut rng);
    let w1 = [cid(1, 6), cid(2, 6), cid(3, 6), None, cid(6, 6)];
    let w2 = [cid(5, 6), cid(5, 6), None, cid(4, 6), cid(1, 6)];
    let steps = crate::model::one_hot_steps(&[&w1, &w2], 6).unwrap();
    let settings = TrainSettings {
        lr: 1e-2,
        dropout: 0.0,
        clip_norm: f64::INFINITY,
    };
    let mut opt = AdamState::new(p.tensors());
    let first = reconstruction_step(&mut p, &steps, &mut opt, &settings, &mut rng).unwrap();
    let mut last = first;
    for _ in 0..199 {
        last = reconstruction_step(&mut p, &steps, &mut opt, &settings, &mut rng).unwrap();
    }
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    assert_eq!(opt.step_count(), 200);
}

#[test]
fn prediction_is_a_distribution() {
    let (_, p) = small_model(8);
    let pred = predict_popularity(&p.encoder, &encode_requests(&[None, None], 4).unwrap()).unwrap();
    let s: f64 = pred.as_slice().iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
    assert!(pred.as_slice().iter().all(|v| *v > 0.0));
}
