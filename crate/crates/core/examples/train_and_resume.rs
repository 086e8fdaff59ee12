//! Trains on a small synthetic split, checkpoints, resumes and shows that the
//! resumed run continues the same loss curve.
//!
//! cargo run --release --example train_and_resume

use epn::data::{generate_synthetic, prepare_scenes, SyntheticConfig, WindowConfig};
use epn::model::ModelConfig;
use epn::train::{Checkpoint, TrainConfig, Trainer};

fn main() -> epn::Result<()> {
    let synth = SyntheticConfig { num_scenes: 30, seed: 11, ..Default::default() };
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let config = TrainConfig { batch_size: 16, epochs: 4, val_limit: Some(32), ..Default::default() };

    let mut straight: Trainer<f32> = Trainer::new(ModelConfig::default(), config.clone())?;
    straight.fit(&split, |c, best| {
        let v = c.validation.as_ref().map_or(f64::NAN, |v| v.ade);
        println!("epoch {} step {:4} val ADE {v:.3}{}", c.epoch, c.step, if best { " *" } else { "" });
        Ok(())
    })?;

    let dir = std::env::temp_dir().join("epn-train-example.json");
    let mut first: Trainer<f32> = Trainer::new(ModelConfig::default(), TrainConfig { epochs: 2, ..config.clone() })?;
    first.fit(&split, |_, _| Ok(()))?;
    first.checkpoint(None).save(&dir)?;
    let mut resumed: Trainer<f32> = Trainer::resume(&Checkpoint::load(&dir)?)?;
    resumed.config.epochs = 4;
    resumed.fit(&split, |_, _| Ok(()))?;

    let tail = &straight.curve[first.curve.len()..];
    let same = tail.iter().zip(&resumed.curve).all(|(a, b)| a == b);
    println!("resumed curve matches uninterrupted run: {same} ({} steps)", resumed.curve.len());
    let _ = std::fs::remove_file(dir);
    Ok(())
}
