//! Builds a two-layer convolutional graph by hand, backpropagates a combined
//! time and STFT-magnitude loss, and compares every kernel gradient with a
//! central difference.
//!
//! ```text
//! cargo run --release --example autodiff_gradcheck
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amrconvnet::dsp::StftParams;
use amrconvnet::loss::{combined_loss, combined_loss_graph, LossConfig};
use amrconvnet::tensor::{conv1d_forward, Graph, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap()
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, vec![1, 64]);
    let target: Vec<f64> = (0..64).map(|t| (t as f64 * 0.3).sin() * 0.4).collect();
    let w1 = random(&mut rng, vec![4, 1, 9]);
    let b1 = random(&mut rng, vec![4]);
    let w2 = random(&mut rng, vec![1, 4, 5]);
    let b2 = random(&mut rng, vec![1]);
    let loss_cfg = LossConfig {
        lambda: 0.5,
        stft: StftParams::new(32, 8)?,
        ..LossConfig::default()
    };

    let mut g = Graph::new();
    let input = g.leaf(x.clone());
    let params = [g.param(&w1), g.param(&b1), g.param(&w2), g.param(&b2)];
    let h = g.conv1d(input, params[0], params[1], 1)?;
    let h = g.leaky_relu(h, 0.2);
    let y = g.conv1d(h, params[2], params[3], 1)?;
    let loss = combined_loss_graph(&mut g, y, &target, &loss_cfg)?;
    g.backward(loss.total)?;
    println!("loss {:?} over {} tape nodes", loss.value(&g), g.len());

    let eval = |w1: &Tensor, w2: &Tensor| -> f64 {
        let h = conv1d_forward(&x, w1, &b1, 1).unwrap();
        let h = Tensor::new(h.shape().to_vec(), h.data().iter().map(|&v| if v > 0.0 { v } else { 0.2 * v }).collect()).unwrap();
        let y = conv1d_forward(&h, w2, &b2, 1).unwrap();
        combined_loss(y.data(), &target, &loss_cfg).unwrap().total
    };
    let eps = 1e-6;
    for (name, which) in [("w1", 0), ("w2", 2)] {
        let analytic = g.grad(params[which]).unwrap();
        let mut worst = 0.0f64;
        for i in 0..analytic.len() {
            let (mut a, mut b) = (w1.clone(), w2.clone());
            let (mut c, mut d) = (w1.clone(), w2.clone());
            if which == 0 {
                a.data_mut()[i] += eps;
                c.data_mut()[i] -= eps;
            } else {
                b.data_mut()[i] += eps;
                d.data_mut()[i] -= eps;
            }
            let fd = (eval(&a, &b) - eval(&c, &d)) / (2.0 * eps);
            worst = worst.max((fd - analytic[i]).abs());
        }
        println!("{name}: {} entries, max |analytic - numeric| = {worst:.2e}", analytic.len());
    }
    Ok(())
}
