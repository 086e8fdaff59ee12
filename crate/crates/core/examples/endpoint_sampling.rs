//! Draws endpoint hypotheses from the widened prior, refines them and
//! decodes one trajectory per endpoint.

use epn::data::{generate_synthetic, prepare_scenes, SyntheticConfig, WindowConfig};
use epn::model::{sample_latent, Ablation, Epn, LatentSource, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> epn::Result<()> {
    let synth = SyntheticConfig { num_scenes: 2, seed: 3, ..Default::default() };
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let window = &split.train[0];
    let config = ModelConfig::default();
    let model: Epn<f64> = Epn::new(config.clone(), Ablation::default(), 42)?;
    let enc = model.encode_window(window)?.enc;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let prior = LatentSource::Prior { width: config.latent_width, sigma: config.sigma_t };
    for (i, z) in sample_latent(prior, 6, &mut rng)?.iter().enumerate() {
        let raw = model.decode_endpoint(&enc, z)?;
        let h = model.refine_endpoint(&enc, raw)?;
        let traj = model.decode_trajectory(&enc, h.refined)?;
        let last = traj.last().expect("tf steps");
        println!(
            "k={i}: raw ({:7.2}, {:7.2}) offset ({:6.2}, {:6.2}) refined ({:7.2}, {:7.2}) trajectory end ({:7.2}, {:7.2})",
            h.raw[0], h.raw[1], h.offset[0], h.offset[1], h.refined[0], h.refined[1], last[0], last[1]
        );
    }
    println!("(untrained weights; run the training example for meaningful endpoints)");
    Ok(())
}
