//! Trains briefly, then reports best-of-1 and best-of-6 metrics next to the
//! constant-velocity baseline, in meters and in feet.
//!
//! cargo run --release --example evaluate_against_baseline

use epn::data::{generate_synthetic, prepare_scenes, SceneWindow, SyntheticConfig, WindowConfig};
use epn::metrics::{constant_velocity_baseline, truth_of, MetricReport};
use epn::model::ModelConfig;
use epn::train::{TrainConfig, Trainer};

fn main() -> epn::Result<()> {
    let synth = SyntheticConfig::maneuver_rich(60, 2);
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let config = TrainConfig { max_steps: Some(300), epochs: 1000, val_limit: Some(64), ..Default::default() };
    let mut trainer: Trainer<f32> = Trainer::new(ModelConfig::default(), config)?;
    trainer.fit(&split, |_, _| Ok(()))?;

    let test: Vec<&SceneWindow> = split.test.iter().collect();
    for k in [1, 6] {
        let sets = trainer.model.predict(&test, k, 42)?;
        let report = MetricReport::from_predictions(&sets, &test)?;
        println!("EPN best-of-{k}\n{}", report.table());
    }
    let pairs = test
        .iter()
        .map(|w| Ok((constant_velocity_baseline(w, 25)?, truth_of(w))))
        .collect::<epn::Result<Vec<_>>>()?;
    let cv = MetricReport::from_pairs(&pairs, 1)?;
    println!("constant velocity\n{}", cv.table());
    println!("constant velocity (feet)\n{}", cv.in_feet().table());
    Ok(())
}
