//! Prints the layer table of the full-size and toy networks and checks
//! that a forward pass keeps the signal length.
//!
//! ```text
//! cargo run --release --example model_architecture
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use amrconvnet::model::{Model, ModelConfig};
use amrconvnet::tensor::{Graph, Tensor};

fn describe(name: &str, config: ModelConfig) -> anyhow::Result<()> {
    println!("{name}: {} parameters, input length multiple {}", config.layers().iter().map(|l| l.parameter_count()).sum::<usize>(), config.length_multiple());
    println!("  {:<8} {:>6} {:>6} {:>6} {:>6} {:>10}", "layer", "in", "out", "kernel", "stride", "params");
    let enc = config.encoder_layers().len();
    let layers = config.layers();
    for (i, l) in layers.iter().enumerate() {
        let tag = match i {
            i if i < enc => format!("enc{}", i + 1),
            i if i + 1 == layers.len() => "out".to_string(),
            i => format!("dec{}", i + 1 - enc),
        };
        println!(
            "  {tag:<8} {:>6} {:>6} {:>6} {:>6} {:>10}",
            l.in_channels, l.out_channels, l.kernel, l.stride, l.parameter_count()
        );
    }
    let model = Model::build(config)?;
    let len = 4 * model.config().length_multiple();
    let mut g = Graph::new();
    let x = g.leaf(Tensor::signal(vec![0.01; len]));
    let fwd = model.forward(&mut g, x, false, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!(
        "  forward: input [1, {len}] -> latent {:?} -> output {:?}\n",
        g.value(fwd.latent).shape(),
        g.value(fwd.output).shape()
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    describe("toy", ModelConfig::toy())?;
    describe("full", ModelConfig::default())
}
