//! Analytic gradients against central finite differences, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wenas::autodiff::{Graph, NodeId, Tensor, BATCH_NORM_EPS};
use wenas::cellspace::{random_genome, Genome, OpKind};
use wenas::lmdata::BpttWindow;
use wenas::model::{init_params, lm_forward, DropoutRates, Mode, ModelConfig};

const STEP: f64 = 1e-6;

/// `||a - n|| / (||a|| + ||n||)`, zero when both vanish.
fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Largest relative error over all inputs of `build`, which maps parameter
/// leaves to a scalar loss.
fn check(inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId) -> f64 {
    let loss_of = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = vals.iter().map(|t| g.param(t.clone())).collect();
        let l = build(&mut g, &ids);
        g.value(l).data()[0]
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let l = build(&mut g, &ids);
    let grads = g.backward(l).unwrap();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[k]).unwrap().data().to_vec();
        let mut numeric = vec![0.0; input.len()];
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= STEP;
            numeric[j] = (loss_of(&plus) - loss_of(&minus)) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Entries in `(-1, 1)` kept away from zero so relu kinks are not straddled.
fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any tensor to a scalar through a fixed random projection, so
/// every output entry gets a distinct upstream gradient.
fn project(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rand_tensor(g.shape(x), &mut rng);
    let r = g.constant(r);
    let m = g.mul(x, r).unwrap();
    g.sum_all(m)
}

fn assert_primitive(name: &str, err: f64) {
    assert!(err < 1e-4, "{name}: relative error {err:e}");
}

pub fn affine_matrix_and_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [rand_tensor(&[3, 4], &mut rng), rand_tensor(&[5, 4], &mut rng)];
    assert_primitive("affine", check(&inputs, &|g, p| {
        let y = g.affine(p[1], p[0]).unwrap();
        project(g, y, 7)
    }));
    let inputs = [rand_tensor(&[4], &mut rng), rand_tensor(&[2, 4], &mut rng)];
    assert_primitive("affine vector", check(&inputs, &|g, p| {
        let y = g.affine(p[1], p[0]).unwrap();
        project(g, y, 8)
    }));
}

pub fn elementwise_binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = [rand_tensor(&[3, 2], &mut rng), rand_tensor(&[3, 2], &mut rng)];
    for (name, op) in [("add", 0), ("sub", 1), ("mul", 2)] {
        let err = check(&inputs, &|g, p| {
            let y = match op {
                0 => g.add(p[0], p[1]),
                1 => g.sub(p[0], p[1]),
                _ => g.mul(p[0], p[1]),
            }
            .unwrap();
            project(g, y, 3)
        });
        assert_primitive(name, err);
    }
}

pub fn bias_and_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = [rand_tensor(&[4, 3], &mut rng), rand_tensor(&[3], &mut rng)];
    assert_primitive("add_bias", check(&inputs, &|g, p| {
        let y = g.add_bias(p[0], p[1]).unwrap();
        project(g, y, 4)
    }));
    assert_primitive("scale", check(&inputs[..1], &|g, p| {
        let y = g.scale(p[0], -1.7);
        project(g, y, 5)
    }));
}

pub fn every_activation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs = [rand_tensor(&[3, 5], &mut rng)];
    for op in OpKind::ALL {
        let err = check(&inputs, &|g, p| {
            let y = g.activation(op, p[0]);
            project(g, y, 6)
        });
        assert_primitive(op.name(), err);
    }
}

pub fn sum_n_and_scale_by_element() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [
        rand_tensor(&[2, 3], &mut rng),
        rand_tensor(&[2, 3], &mut rng),
        rand_tensor(&[2, 3], &mut rng),
        rand_tensor(&[3], &mut rng),
    ];
    assert_primitive("sum_n", check(&inputs[..3], &|g, p| {
        let y = g.sum_n(p).unwrap();
        project(g, y, 9)
    }));
    assert_primitive("scale_by_element", check(&inputs, &|g, p| {
        let a = g.scale_by_element(p[0], p[3], 0).unwrap();
        let b = g.scale_by_element(p[1], p[3], 2).unwrap();
        let y = g.add(a, b).unwrap();
        project(g, y, 10)
    }));
}

pub fn softmax_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = [rand_tensor(&[5], &mut rng)];
    assert_primitive("softmax", check(&inputs, &|g, p| {
        let y = g.softmax(p[0]).unwrap();
        project(g, y, 11)
    }));
}

pub fn cross_entropy_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = [rand_tensor(&[4, 6], &mut rng)];
    assert_primitive("cross_entropy", check(&inputs, &|g, p| g.cross_entropy(p[0], &[0, 5, 2, 2]).unwrap()));
}

pub fn gather_with_repeats() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = [rand_tensor(&[5, 3], &mut rng)];
    assert_primitive("gather", check(&inputs, &|g, p| {
        let y = g.gather(p[0], &[4, 1, 4, 0]).unwrap();
        project(g, y, 12)
    }));
}

pub fn concat_rows_mixed_heights() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs = [rand_tensor(&[2, 3], &mut rng), rand_tensor(&[1, 3], &mut rng)];
    assert_primitive("concat_rows", check(&inputs, &|g, p| {
        let y = g.concat_rows(p).unwrap();
        project(g, y, 13)
    }));
}

pub fn batch_norm_over_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs = [rand_tensor(&[6, 4], &mut rng)];
    assert_primitive("batch_norm", check(&inputs, &|g, p| {
        let y = g.batch_norm(p[0], true, BATCH_NORM_EPS).unwrap();
        project(g, y, 14)
    }));
}

pub fn sum_all_scalar() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = [rand_tensor(&[3, 3], &mut rng)];
    assert_primitive("sum_all", check(&inputs, &|g, p| g.sum_all(p[0])));
}

fn window(rng: &mut ChaCha8Rng, vocab: usize, steps: usize, batch: usize) -> BpttWindow {
    let stream: Vec<Vec<usize>> = (0..=steps)
        .map(|_| (0..batch).map(|_| rng.gen_range(0..vocab)).collect())
        .collect();
    BpttWindow {
        inputs: stream[..steps].to_vec(),
        targets: stream[1..].to_vec(),
    }
}

fn lm_gradient_error(genome: &Genome, cfg: &ModelConfig, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = 7;
    let mut params = init_params::<f64, _>(genome, cfg, vocab, &mut rng).unwrap();
    // Larger weights than the default init so every path carries signal.
    for t in params.tensors_mut() {
        *t = rand_tensor(t.shape(), &mut rng);
    }
    let w = window(&mut rng, vocab, 3, 2);
    let h0 = rand_tensor(&[2, cfg.hidden_dim], &mut rng).map(|v| 0.5 * v);
    let loss_of = |p: &wenas::model::LmParams<f64>| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        lm_forward(genome, p, &w, &h0, cfg, &mut r, false)
            .unwrap()
            .loss_value()
            .unwrap()
    };
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let analytic = lm_forward(genome, &params, &w, &h0, cfg, &mut r, false)
        .unwrap()
        .gradients()
        .unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..analytic.len() {
        let len = params.tensors()[k].len();
        let mut numeric = vec![0.0; len];
        for j in 0..len {
            let orig = params.tensors()[k].data()[j];
            params.tensors_mut()[k].data_mut()[j] = orig + STEP;
            let up = loss_of(&params);
            params.tensors_mut()[k].data_mut()[j] = orig - STEP;
            let down = loss_of(&params);
            params.tensors_mut()[k].data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(analytic[k].data(), &numeric));
    }
    worst
}

pub fn language_model_loss_matches_finite_differences() {
    let cfg = ModelConfig::new(5, 5, 4)
        .with_dropout(DropoutRates::NONE)
        .with_mode(Mode::Eval);
    let genomes = [
        Genome::from_pairs(&[("sigmoid", 0), ("tanh", 1), ("relu", 0)]).unwrap(),
        Genome::from_pairs(&[("identity", 0), ("sigmoid", 0), ("tanh", 2)]).unwrap(),
    ];
    for (i, g) in genomes.iter().enumerate() {
        let err = lm_gradient_error(g, &cfg, 20 + i as u64);
        assert!(err < 1e-3, "{g}: relative error {err:e}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg8 = ModelConfig::new(5, 5, 8)
        .with_dropout(DropoutRates::NONE)
        .with_mode(Mode::Eval);
    for seed in 0..3 {
        let g = random_genome(8, &mut rng).unwrap();
        let err = lm_gradient_error(&g, &cfg8, seed);
        assert!(err < 1e-3, "{g}: relative error {err:e}");
    }
}

pub fn language_model_with_batch_norm_matches_finite_differences() {
    let cfg = ModelConfig::new(5, 5, 4).with_dropout(DropoutRates::NONE);
    assert!(cfg.batch_norm_active());
    let g = Genome::from_pairs(&[("tanh", 0), ("sigmoid", 1), ("identity", 0)]).unwrap();
    let err = lm_gradient_error(&g, &cfg, 5);
    assert!(err < 1e-3, "relative error {err:e}");
}

/// Each check above also runs as its own test here.
macro_rules! as_tests {
    ($($name:ident),* $(,)?) => {
        #[cfg(test)]
        mod each {
            $(#[test]
            fn $name() {
                super::$name()
            })*
        }
    };
}

as_tests!(
    affine_matrix_and_vector,
    elementwise_binary_ops,
    bias_and_scale,
    every_activation,
    sum_n_and_scale_by_element,
    softmax_vector,
    cross_entropy_rows,
    gather_with_repeats,
    concat_rows_mixed_heights,
    batch_norm_over_rows,
    sum_all_scalar,
    language_model_loss_matches_finite_differences,
    language_model_with_batch_norm_matches_finite_differences,
);
