//! Runs the encoder one stage at a time on a single window and checks the
//! environment feature against the composed encoder.

use epn::data::{generate_synthetic, prepare_scenes, SyntheticConfig, WindowConfig};
use epn::model::{Ablation, Epn, ModelConfig};

fn main() -> epn::Result<()> {
    let synth = SyntheticConfig { num_scenes: 2, seed: 3, ..Default::default() };
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let window = &split.train[0];

    let model: Epn<f64> = Epn::new(ModelConfig::default(), Ablation::default(), 42)?;
    println!("{} parameters", model.num_parameters());
    let e = model.encode_window(window)?;
    println!("occupied cells: {}", e.occupancy.mask.occupied());
    println!("t_nei {}x{}x{}, plan cell(s) {:?}", e.t_nei.rows, e.t_nei.cols, e.t_nei.depth, e.t_plan.nonzero_cells());
    println!("social {} + dynamic {} = enc {}", e.social.len(), e.dynamic.len(), e.enc.len());

    let again = model.build_environment_feature(&model.social_pool(&e.t_nei, &e.t_plan)?, &e.dynamic)?;
    let diff = again.iter().zip(&e.enc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("recomposed encoding differs by {diff:.1e}");
    Ok(())
}
