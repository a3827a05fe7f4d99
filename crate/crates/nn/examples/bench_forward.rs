use ciresdiff_nn::denoiser::{Denoiser, DenoiserConfig};
use ciresdiff_nn::tensor::Tensor;
use ciresdiff_nn::Graph;
use std::time::Instant;

fn main() {
    for (s, c) in [(16usize, 8usize), (32, 8), (32, 6)] {
        let cfg = DenoiserConfig { base_channels: c, cross_attention: true, ..DenoiserConfig::default() };
        let model = Denoiser::new(cfg.clone());
        println!("S={s} c={c} params={}", model.param_count());
        let n = s * s * s;
        let x = Tensor::new(vec![1, s, s, s], vec![0.3; n]);
        let y = Tensor::new(vec![1, s, s, s], vec![0.5; n]);
        let z = vec![0.1; cfg.text_dim];

        let t0 = Instant::now();
        let reps = if s == 16 { 10 } else { 3 };
        for _ in 0..reps {
            let _ = model.predict_tensor(&x, &y, 5, Some(&z));
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;

        let t0 = Instant::now();
        for _ in 0..reps {
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let xv = g.input(x.clone());
            let yv = g.input(y.clone());
            let zv = g.input(Tensor::new(vec![z.len()], z.clone()));
            let pred = model.forward(&mut g, &bound, xv, yv, 5, Some(zv));
            let x0v = g.input(y.clone());
            let loss = g.mse(pred, x0v);
            let grads = g.backward(loss);
            let _ = model.params.flat_grad(&bound, &grads);
        }
        let step = t0.elapsed().as_secs_f64() / reps as f64;
        println!("  forward {:.3}s  fwd+bwd {:.3}s", fwd, step);
    }
}
