//! Central-difference gradient checks in 64-bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::model::{Batch, DecoderSpec, EncoderSpec, Head, Model, ModelSpec};
use super::Tensor;
use crate::util::rng_for;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so that two gradients that are
/// both essentially zero do not count as a mismatch.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU kink; finite differences are
    /// meaningless there.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares the tape's gradients for `params` with central differences of the
/// scalar returned by `build`.
pub fn check<F>(name: &str, params: &[Tensor<f64>], build: F) -> GradReport
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |ps: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = build(&mut g, &vars);
        (g, vars, loss)
    };
    let (g, vars, loss) = eval(params);
    let grads = g.backward(loss);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    let base_sig = g.relu_signature();
    let mut work = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; params[pi].len()]);
        for j in 0..params[pi].len() {
            let orig = work[pi].data[j];
            work[pi].data[j] = orig + EPS;
            let (g1, _, l1) = eval(&work);
            work[pi].data[j] = orig - EPS;
            let (g2, _, l2) = eval(&work);
            work[pi].data[j] = orig;
            if g1.relu_signature() != base_sig || g2.relu_signature() != base_sig {
                skipped += 1;
                continue;
            }
            let numeric = (g1.value(l1).data[0] - g2.value(l2).data[0]) / (2.0 * EPS);
            worst = worst.max(relative_error(analytic[j], numeric));
            checked += 1;
        }
    }
    GradReport {
        name: name.to_string(),
        max_rel_error: worst,
        checked,
        skipped,
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Values bounded away from zero so ReLU kinks cannot be crossed by ±EPS.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Every layer type in isolation.
pub fn layer_checks(seed: u64) -> Vec<GradReport> {
    let mut rng = rng_for(seed, &[1]);
    let mut out = Vec::new();

    let x = random(&mut rng, &[2, 9, 3], -1.0, 1.0);
    let w = random(&mut rng, &[3, 3, 4], -1.0, 1.0);
    let b = random(&mut rng, &[4], -1.0, 1.0);
    let c: Vec<f64> = (0..2 * 9 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("conv1d", &[x, w, b], |g, v| {
        let y = g.conv1d(v[0], v[1], v[2], 2);
        g.dot(y, c.clone())
    }));

    let x = off_kink(&mut rng, &[3, 4]);
    let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("relu", std::slice::from_ref(&x), |g, v| {
        let y = g.relu(v[0]);
        g.dot(y, c.clone())
    }));
    out.push(check("dropout", &[x], |g, v| {
        let mut r = rng_for(seed, &[2]);
        let y = g.dropout(v[0], 0.4, Some(&mut r));
        g.dot(y, c.clone())
    }));

    let x = random(&mut rng, &[2, 5, 3], -1.0, 1.0);
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("mean_time", &[x], |g, v| {
        let y = g.mean_time(v[0]);
        g.dot(y, c.clone())
    }));

    let x = random(&mut rng, &[3, 4], -1.0, 1.0);
    let w = random(&mut rng, &[4, 2], -1.0, 1.0);
    let b = random(&mut rng, &[2], -1.0, 1.0);
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("linear", &[x, w, b], |g, v| {
        let y = g.linear(v[0], v[1], v[2]);
        g.dot(y, c.clone())
    }));

    let a = random(&mut rng, &[2, 3], -1.0, 1.0);
    let b = random(&mut rng, &[2, 2], -1.0, 1.0);
    let c: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("concat", &[a, b], |g, v| {
        let y = g.concat(&[v[0], v[1]]);
        g.dot(y, c.clone())
    }));

    let x = random(&mut rng, &[3, 4], -3.0, 3.0);
    let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.push(check("sigmoid", std::slice::from_ref(&x), |g, v| {
        let y = g.sigmoid(v[0]);
        g.dot(y, c.clone())
    }));
    out.push(check("softmax", std::slice::from_ref(&x), |g, v| {
        let y = g.softmax(v[0]);
        g.dot(y, c.clone())
    }));

    let y2 = random(&mut rng, &[3, 4], -1.0, 1.0);
    out.push(check("add", &[x.clone(), y2], |g, v| {
        let y = g.add(v[0], v[1]);
        g.dot(y, c.clone())
    }));
    out.push(check("sum_squares", &[x], |g, v| g.sum_squares(v[0])));

    let p = random(&mut rng, &[4, 3], 0.05, 0.95);
    let target: Vec<f64> = (0..12)
        .map(|_| f64::from(rng.gen::<bool>() as u8))
        .collect();
    let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(0.5..2.0)).collect();
    for gamma in [0.0, 2.0] {
        out.push(check(
            &format!("binary_focal(gamma={gamma})"),
            std::slice::from_ref(&p),
            |g, v| g.binary_focal(v[0], target.clone(), gamma, weights.clone()),
        ));
    }
    let classes: Vec<Option<usize>> = vec![Some(0), Some(2), None, Some(1)];
    for gamma in [0.0, 2.0] {
        out.push(check(
            &format!("categorical_focal(gamma={gamma})"),
            std::slice::from_ref(&p),
            |g, v| g.categorical_focal(v[0], classes.clone(), gamma, weights.clone()),
        ));
    }
    out
}

fn check_model(name: &str, spec: ModelSpec, seed: u64) -> GradReport {
    let mut model = Model::<f64>::init(spec.clone(), seed).expect("valid spec");
    let mut rng = rng_for(seed, &[3]);
    // Zero biases put ReLUs exactly on their kink whenever a row is all zero.
    for (name, t) in model.params.tensors.iter_mut() {
        if name.ends_with(".b") {
            t.data
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let size = 3;
    let batch = Batch {
        size,
        audio: Some(random(
            &mut rng,
            &[size, spec.audio_frames, spec.audio_features],
            -1.0,
            1.0,
        )),
        text: Some(random(
            &mut rng,
            &[size, spec.text_slots, spec.text_width],
            -1.0,
            1.0,
        )),
        speaker: (spec.speakers > 0).then(|| {
            Tensor::from_fn(&[size, spec.speakers], |i| {
                f64::from(i % spec.speakers == 0)
            })
        }),
    };
    let labels = spec.head.labels();
    let names: Vec<String> = model.params.tensors.keys().cloned().collect();
    let params: Vec<Tensor<f64>> = model.params.tensors.values().cloned().collect();
    let binary: Vec<f64> = (0..size * labels).map(|i| f64::from(i % 3 == 0)).collect();
    let classes: Vec<Option<usize>> = (0..size).map(|i| Some(i % labels)).collect();
    let weights = vec![1.0; labels];
    check(name, &params, |g, vars| {
        let pv = names.iter().cloned().zip(vars.iter().copied()).collect();
        let mut r = rng_for(seed, &[4]);
        let probs = model
            .forward_graph(g, &pv, &batch, Some(&mut r))
            .expect("valid batch");
        match spec.head {
            Head::Sigmoid(_) => g.binary_focal(probs, binary.clone(), 1.0, weights.clone()),
            Head::Softmax(_) => g.categorical_focal(probs, classes.clone(), 0.0, weights.clone()),
        }
    })
}

pub fn model_spec_for_check(head: Head, speakers: usize) -> ModelSpec {
    ModelSpec {
        audio: Some(EncoderSpec::doubling(2, 4, 3, 0.2, 3)),
        text: Some(EncoderSpec::doubling(2, 3, 3, 0.1, 3)),
        audio_frames: 41,
        audio_features: 5,
        text_slots: 7,
        text_width: 9,
        speakers,
        decoder: DecoderSpec {
            hidden: 6,
            layers: 2,
            dropout: 0.2,
        },
        head,
        audio_norm: None,
    }
}

/// The full dual-encoder model with each head type.
pub fn model_checks(seed: u64) -> Vec<GradReport> {
    vec![
        check_model(
            "model(sigmoid)",
            model_spec_for_check(Head::Sigmoid(4), 3),
            seed,
        ),
        check_model(
            "model(softmax)",
            model_spec_for_check(Head::Softmax(5), 0),
            seed,
        ),
    ]
}

pub fn all_checks(seed: u64) -> Vec<GradReport> {
    let mut v = layer_checks(seed);
    v.extend(model_checks(seed));
    v
}
