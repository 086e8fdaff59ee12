mod common;

use epn::data::SceneWindow;
use epn::model::ModelConfig;
use epn::train::{TrainConfig, Trainer};

#[test]
fn refined_endpoints_beat_raw_ones_on_an_overfit_set() {
    let windows = common::tiny_windows(16, 21);
    let tc = TrainConfig { batch_size: 16, epochs: 400, learning_rate: 3e-3, ..Default::default() };
    let mut t: Trainer<f32> = Trainer::new(ModelConfig::tiny(), tc).unwrap();
    for _ in 0..400 {
        t.run_epoch(&windows).unwrap();
    }
    let refs: Vec<&SceneWindow> = windows.iter().collect();
    let sets = t.model.predict(&refs, 6, 3).unwrap();
    let (mut raw, mut refined) = (0.0, 0.0);
    for (s, w) in sets.iter().zip(&windows) {
        let g = w.endpoint();
        for h in &s.hypotheses {
            raw += (h.endpoint.raw[0] - g[0]).hypot(h.endpoint.raw[1] - g[1]);
            refined += (h.endpoint.refined[0] - g[0]).hypot(h.endpoint.refined[1] - g[1]);
        }
    }
    assert!(refined < raw, "refined {refined:.3} vs raw {raw:.3}");
}
