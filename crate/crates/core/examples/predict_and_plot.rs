//! Predicts six futures for a few windows and renders them as SVG.
//!
//! cargo run --release --example predict_and_plot -- [figure.svg]

use epn::data::{generate_synthetic, prepare_scenes, SceneWindow, SyntheticConfig, WindowConfig};
use epn::model::ModelConfig;
use epn::plot::render_svg;
use epn::predict::{PredictionEntry, PredictionRecord};
use epn::train::{TrainConfig, Trainer};

fn main() -> epn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "predictions.svg".into());
    let synth = SyntheticConfig::maneuver_rich(40, 9);
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let config = TrainConfig { max_steps: Some(200), epochs: 1000, val_limit: Some(32), ..Default::default() };
    let mut trainer: Trainer<f32> = Trainer::new(ModelConfig::default(), config)?;
    trainer.fit(&split, |_, _| Ok(()))?;

    let picked: Vec<&SceneWindow> = split.test.iter().take(3).collect();
    let sets = trainer.model.predict(&picked, 6, 42)?;
    for s in &sets {
        let ends: Vec<String> = s.hypotheses.iter().map(|h| format!("({:.1}, {:.1})", h.endpoint.refined[0], h.endpoint.refined[1])).collect();
        println!("window {}: endpoints {}", s.window_id, ends.join(" "));
    }
    let entries = sets.into_iter().zip(&picked).map(|(s, w)| PredictionEntry::new(s, w)).collect();
    let record = PredictionRecord::new(6, 42, entries);
    std::fs::write(&out, render_svg(&record)).map_err(|e| epn::EpnError::io(&out, e))?;
    println!("wrote {out}");
    Ok(())
}
