#![allow(dead_code)]

use epn::data::{generate_synthetic, prepare_scenes, SceneWindow, SyntheticConfig, WindowConfig};
use epn::model::{Ablation, Batch, Epn, ModelConfig};
use epn_autodiff::{Graph, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Windows cut for `config`'s horizons and grid from a small synthetic highway.
pub fn windows_for(config: &ModelConfig, synth: &SyntheticConfig) -> Vec<SceneWindow> {
    let wc = WindowConfig { th: config.th, tf: config.tf, stride: 1, grid: config.grid, ..Default::default() };
    let tracks = generate_synthetic(synth).unwrap();
    let split = prepare_scenes(&tracks, synth.hz, &wc, synth.seed).unwrap();
    split.all().cloned().collect()
}

pub fn tiny_windows(n: usize, seed: u64) -> Vec<SceneWindow> {
    let synth = SyntheticConfig { num_scenes: 4, seed, ..Default::default() };
    let mut w = windows_for(&ModelConfig::tiny(), &synth);
    assert!(w.len() >= n, "only {} windows", w.len());
    w.truncate(n);
    w
}

pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

/// Fourth-order central differences of the training loss against backprop for every
/// scalar parameter of a tiny f64 model.
pub fn gradient_check(ablation: Ablation, seed: u64) -> GradCheck {
    let config = ModelConfig::tiny();
    let windows = tiny_windows(4, seed);
    let refs: Vec<&SceneWindow> = windows.iter().collect();
    let mut model: Epn<f64> = Epn::new(config.clone(), ablation, seed).unwrap();
    let batch = Batch::<f64>::new(&refs, &config, ablation.use_plan).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Matrix::from_fn(batch.size, config.latent_width, |_, _| StandardNormal.sample(&mut rng));
    let loss = |m: &Epn<f64>| {
        let mut g = Graph::new(&m.params);
        let out = m.forward_train(&mut g, &batch, eps.clone(), 1.0);
        g.value(out.total)[(0, 0)]
    };
    let analytic = {
        let mut g = Graph::new(&model.params);
        let out = model.forward_train(&mut g, &batch, eps.clone(), 1.0);
        g.backward(out.total).into_param_grads(&model.params)
    };
    let h = 1e-3;
    let ids: Vec<_> = model.params.ids().collect();
    let mut report = GradCheck { checked: 0, passed: 0, worst: 0.0 };
    for (pi, id) in ids.into_iter().enumerate() {
        for j in 0..model.params.get(id).len() {
            let orig = model.params.get(id).data()[j];
            let mut at = |d: f64| {
                model.params.get_mut(id).data_mut()[j] = orig + d;
                loss(&model)
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            model.params.get_mut(id).data_mut()[j] = orig;
            let up = p1;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let a = analytic[pi].data()[j];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale < 1e-7 { 0.0 } else { (a - numeric).abs() / scale };
            report.checked += 1;
            if rel < 1e-4 {
                report.passed += 1;
            } else if std::env::var("GRAD_VERBOSE").is_ok() {
                eprintln!("{} [{j}] analytic {a:.6e} numeric {numeric:.6e} loss {up:.3e}", model.params.name(id));
            }
            report.worst = report.worst.max(rel);
        }
    }
    report
}
