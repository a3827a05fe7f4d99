//! Finite-difference verification of analytic gradients through each
//! network, at small configurations for speed.

use ciresdiff_nn::classifier::{ClassifierConfig, PairClassifier};
use ciresdiff_nn::clip::{contrastive_loss, ClipConfig, ClipTrainer};
use ciresdiff_nn::denoiser::{Denoiser, DenoiserConfig};
use ciresdiff_nn::gradcheck::{check_gradients, spread_indices};
use ciresdiff_nn::tensor::Tensor;
use ciresdiff_nn::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

#[test]
fn denoiser_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = DenoiserConfig {
        base_channels: 2,
        time_dim: 8,
        text_dim: 6,
        cross_attention: true,
        token_grid: 2,
        seed: 4,
    };
    let mut model = Denoiser::new(cfg.clone());
    // Perturb all parameters (zero-init layers included) so no path is
    // trivially dead during the check.
    let mut flat = model.params.flat();
    for v in flat.iter_mut() {
        *v += rng.gen_range(-0.05..0.05);
    }
    model.params.set_flat(&flat);

    let s = 8;
    let x_t = rand_tensor(vec![1, s, s, s], &mut rng);
    let y0 = rand_tensor(vec![1, s, s, s], &mut rng);
    let x0 = rand_tensor(vec![1, s, s, s], &mut rng);
    let z: Vec<f64> = (0..cfg.text_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = 3;

    let loss_of = |model: &Denoiser| -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let xv = g.input(x_t.clone());
        let yv = g.input(y0.clone());
        let x0v = g.input(x0.clone());
        let zv = g.input(Tensor::new(vec![z.len()], z.clone()));
        let pred = model.forward(&mut g, &bound, xv, yv, t, Some(zv));
        let loss = g.mse(pred, x0v);
        let value = g.value(loss).item();
        let grads = g.backward(loss);
        (value, model.params.flat_grad(&bound, &grads))
    };

    let (_, analytic) = loss_of(&model);
    let flat = model.params.flat();
    let indices = spread_indices(flat.len(), 60, 9);
    let probes = check_gradients(
        |p| {
            let mut m = Denoiser::new(cfg.clone());
            m.params.set_flat(p);
            loss_of(&m).0
        },
        &flat,
        &analytic,
        &indices,
        1e-5,
    );
    for p in &probes {
        assert!(
            p.rel_err < 1e-3,
            "param {}: analytic {} vs numeric {} (rel {})",
            p.index,
            p.analytic,
            p.numeric,
            p.rel_err
        );
    }
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = ClassifierConfig {
        channels: [2, 4, 4],
        seed: 7,
    };
    let mut model = PairClassifier::new(cfg.clone());
    let mut flat = model.params.flat();
    for v in flat.iter_mut() {
        *v += rng.gen_range(-0.05..0.05);
    }
    model.params.set_flat(&flat);

    let pair = rand_tensor(vec![2, 8, 8, 8], &mut rng);
    let target = 1.0;

    let loss_of = |model: &PairClassifier| -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let input = g.input(pair.clone());
        let logit = model.forward(&mut g, &bound, input);
        let loss = g.bce_with_logit(logit, target);
        let value = g.value(loss).item();
        let grads = g.backward(loss);
        (value, model.params.flat_grad(&bound, &grads))
    };

    let (_, analytic) = loss_of(&model);
    let flat = model.params.flat();
    let indices = spread_indices(flat.len(), 40, 3);
    let probes = check_gradients(
        |p| {
            let mut m = PairClassifier::new(cfg.clone());
            m.params.set_flat(p);
            loss_of(&m).0
        },
        &flat,
        &analytic,
        &indices,
        1e-5,
    );
    for p in &probes {
        assert!(p.rel_err < 1e-3, "{p:?}");
    }
}

#[test]
fn clip_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = ClipConfig {
        embed_dim: 6,
        seed: 13,
        ..ClipConfig::default()
    };
    let trainer = ClipTrainer::new(cfg);
    let tokens: Vec<Vec<usize>> = vec![vec![1, 12, 25, 41], vec![3, 14, 22, 42], vec![7, 18, 29, 41]];
    let images: Vec<Tensor> = (0..3).map(|_| rand_tensor(vec![1, 8, 8, 8], &mut rng)).collect();

    // Check gradients wrt both encoders' parameters jointly.
    let text_len = trainer.text.params.param_count();
    let loss_of = |text: &ciresdiff_nn::encoders::TextEncoder,
                   image: &ciresdiff_nn::encoders::ImageEncoder|
     -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let tb = text.params.bind(&mut g);
        let ib = image.params.bind(&mut g);
        let mut trows = Vec::new();
        let mut irows = Vec::new();
        for i in 0..3 {
            trows.push(text.forward(&mut g, &tb, tokens[i].clone()));
            let v = g.input(images[i].clone());
            irows.push(image.forward(&mut g, &ib, v));
        }
        let tm = g.stack_rows(&trows);
        let im = g.stack_rows(&irows);
        let loss = contrastive_loss(&mut g, tm, im, 0.07).unwrap();
        let value = g.value(loss).item();
        let grads = g.backward(loss);
        let mut flat = text.params.flat_grad(&tb, &grads);
        flat.extend(image.params.flat_grad(&ib, &grads));
        (value, flat)
    };

    let (_, analytic) = loss_of(&trainer.text, &trainer.image);
    let mut flat = trainer.text.params.flat();
    flat.extend(trainer.image.params.flat());
    let indices = spread_indices(flat.len(), 40, 17);
    let text_cfg = trainer.text.config.clone();
    let image_cfg = trainer.image.config.clone();
    let probes = check_gradients(
        |p| {
            let mut text = ciresdiff_nn::encoders::TextEncoder::new(text_cfg.clone());
            let mut image = ciresdiff_nn::encoders::ImageEncoder::new(image_cfg.clone());
            text.params.set_flat(&p[..text_len]);
            image.params.set_flat(&p[text_len..]);
            loss_of(&text, &image).0
        },
        &flat,
        &analytic,
        &indices,
        1e-5,
    );
    for p in &probes {
        assert!(p.rel_err < 1e-3, "{p:?}");
    }
}
