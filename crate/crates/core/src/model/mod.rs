//! The trajectory network: configuration, batching, the batched training and
//! inference passes, and single-window stage operations.

pub mod batch;
pub mod config;
pub mod network;
pub mod ops;

pub use batch::Batch;
pub use config::{Ablation, ConvSpec, ModelConfig};
pub use network::{Channel, Encoding, Epn, InferOutput, TrainOutput};
pub use ops::{kl_loss, sample_latent, EndpointHypothesis, LatentGaussian, LatentSource, Mode, WindowEncoding};

#[cfg(test)]
pub(crate) mod fixtures {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::data::{AgentHistory, SceneWindow, State};

    /// A small random scene: target at `origin`, ego 6 m behind, two
    /// neighbors beside it. Fits both the default and the tiny grid.
    pub(crate) fn window(th: usize, tf: usize, id: u64, origin: [f64; 2], seed: u64) -> SceneWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = 0.2;
        let mut track = |vid: i64, at: [f64; 2]| {
            let v: f64 = rng.random_range(15.0..25.0);
            let drift: f64 = rng.random_range(-0.5..0.5);
            let a: f64 = rng.random_range(-1.0..1.0);
            let state = |k: f64| State {
                x: origin[0] + at[0] + drift * k * dt,
                y: origin[1] + at[1] + v * k * dt + 0.5 * a * (k * dt).powi(2),
                v: v + a * k * dt,
                a,
            };
            let past: Vec<State> = (0..th).map(|t| state(t as f64 - (th - 1) as f64)).collect();
            let future: Vec<State> = (1..=tf).map(|t| state(t as f64)).collect();
            (AgentHistory { vehicle_id: vid, states: past }, future)
        };
        let (target, future) = track(1, [0.0, 0.0]);
        let (ego, plan) = track(2, [0.3, -6.0]);
        let (n3, _) = track(3, [3.4, 3.0]);
        let (n4, _) = track(4, [-3.4, -2.0]);
        SceneWindow {
            window_id: id,
            target_id: 1,
            ego_id: 2,
            t_now: th - 1,
            timestamp: 0.0,
            target,
            neighbors: vec![ego, n3, n4],
            future,
            ego_plan: plan.iter().map(|s| s.position()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use epn_autodiff::{Graph, Matrix, Real};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::fixtures::window;
    use super::*;
    use crate::error::EpnError;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn values<T: Real>(g: &Graph<T>, id: epn_autodiff::NodeId) -> Vec<f64> {
        g.value(id).data().iter().map(|v| v.to_f64_lossless()).collect()
    }

    #[test]
    fn parameter_layout_follows_ablation() {
        let c = ModelConfig::default();
        let full: Epn<f32> = Epn::new(c.clone(), Ablation::default(), 1).unwrap();
        let no_v: Epn<f32> = Epn::new(c.clone(), Ablation { use_velocity: false, ..Default::default() }, 1).unwrap();
        let fuse = |m: &Epn<f32>| m.params.get(m.params.find("encoder.fuse.weight").unwrap()).shape();
        assert_eq!(fuse(&full), (192, 32));
        assert_eq!(fuse(&no_v), (128, 32));
        assert!(no_v.params.find("encoder.velocity.lstm.w_input").is_none());
        let no_r: Epn<f32> = Epn::new(c, Ablation { use_refinement: false, ..Default::default() }, 1).unwrap();
        assert!(no_r.params.find("cvae.refiner.0.weight").is_none());
    }

    #[test]
    fn batched_encoder_matches_stagewise_composition() {
        for ablation in [Ablation::default(), Ablation { use_plan: false, use_acceleration: false, ..Default::default() }] {
            let model: Epn<f64> = Epn::new(ModelConfig::default(), ablation, 3).unwrap();
            let ws: Vec<_> = (0..3).map(|i| window(15, 25, i, [10.0 * i as f64, 50.0], i)).collect();
            let refs: Vec<_> = ws.iter().collect();
            let batch = Batch::new(&refs, &model.config, true).unwrap();
            let mut g = Graph::new(&model.params);
            let e = model.encode(&mut g, &batch);
            let enc = g.value(e.enc).clone();
            for (b, w) in ws.iter().enumerate() {
                let single = model.encode_window(w).unwrap();
                let row: Vec<f64> = enc.row(b).to_vec();
                assert!(max_diff(&row, &single.enc) < 1e-12);
                assert_eq!(single.t_nei.nonzero_cells().len(), 3);
                assert_eq!(single.t_plan.nonzero_cells().len(), usize::from(ablation.use_plan));
            }
        }
    }

    #[test]
    fn stage_operations_reject_bad_shapes_and_modes() {
        let model: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 0).unwrap();
        assert!(matches!(model.encode_plan(&[[0.0, 0.0]; 2]), Err(EpnError::Shape(_))));
        assert!(matches!(model.encode_track(Channel::Position, &[vec![1.0]]), Err(EpnError::Shape(_))));
        let enc = vec![0.0; model.config.environment_width().unwrap()];
        let f = model.encode_endpoint([1.0, 2.0]);
        assert!(matches!(model.posterior(&enc, &f, Mode::Infer), Err(EpnError::Mode(_))));
        assert!(model.posterior(&enc, &f, Mode::Train).is_ok());
        let no_v: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation { use_velocity: false, ..Default::default() }, 0).unwrap();
        assert!(matches!(no_v.encode_track(Channel::Velocity, &[vec![1.0]]), Err(EpnError::Argument(_))));
    }

    #[test]
    fn refinement_identity_and_disabled_offset() {
        let model: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 0).unwrap();
        let enc = vec![0.3; model.config.environment_width().unwrap()];
        let h = model.refine_endpoint(&enc, [1.5, 40.0]).unwrap();
        assert_eq!(h.refined, [h.raw[0] + h.offset[0], h.raw[1] + h.offset[1]]);
        let plain: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation { use_refinement: false, ..Default::default() }, 0).unwrap();
        let h = plain.refine_endpoint(&enc, [1.5, 40.0]).unwrap();
        assert_eq!(h.refined, [1.5, 40.0]);
    }

    #[test]
    fn decoded_positions_are_prefix_sums_of_displacements() {
        let model: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 5).unwrap();
        let w = window(4, 3, 0, [0.0, 0.0], 1);
        let batch = Batch::new(&[&w], &model.config, true).unwrap();
        let mut g = Graph::new(&model.params);
        let z = Matrix::from_fn(1, model.config.latent_width, |_, c| 0.1 * c as f64);
        let out = model.forward_infer(&mut g, &batch, z, 1);
        let d = values(&g, out.deltas);
        let p = values(&g, out.trajectory);
        let (mut x, mut y) = (0.0, 0.0);
        for t in 0..3 {
            x += d[2 * t];
            y += d[2 * t + 1];
            assert!((p[2 * t] - x).abs() < 1e-12 && (p[2 * t + 1] - y).abs() < 1e-12);
        }
        let enc: Vec<f64> = values(&g, out.encoding.enc);
        let refined = values(&g, out.refined);
        let single = model.decode_trajectory(&enc, [refined[0], refined[1]]).unwrap();
        assert!(max_diff(&single.concat(), &d) < 1e-12);
    }

    #[test]
    fn framed_outputs_are_translation_invariant() {
        let model: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 9).unwrap();
        let a = window(4, 3, 0, [0.0, 0.0], 4);
        let b = window(4, 3, 0, [123.0, -4567.0], 4);
        let eps = Matrix::from_fn(1, model.config.latent_width, |_, c| c as f64 - 1.0);
        let run = |w| {
            let batch = Batch::new(&[w], &model.config, true).unwrap();
            let mut g = Graph::new(&model.params);
            let out = model.forward_train(&mut g, &batch, eps.clone(), 1.0);
            (values(&g, out.trajectory), values(&g, out.total))
        };
        let (ta, la) = run(&a);
        let (tb, lb) = run(&b);
        assert!(max_diff(&ta, &tb) < 1e-9);
        assert!((la[0] - lb[0]).abs() < 1e-9 * la[0].abs().max(1.0));
    }

    #[test]
    fn kl_node_matches_closed_form() {
        let model: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<LatentGaussian> = (0..4)
            .map(|_| LatentGaussian {
                mu: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                log_var: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let mut g = Graph::new(&model.params);
        let mu = g.constant(Matrix::from_fn(4, 3, |r, c| q[r].mu[c]));
        let lv = g.constant(Matrix::from_fn(4, 3, |r, c| q[r].log_var[c]));
        let kl = network::kl_node(&mut g, mu, lv);
        let expect = q.iter().map(kl_loss).sum::<f64>() / 4.0;
        assert!((g.value(kl)[(0, 0)] - expect).abs() < 1e-12);
        assert_eq!(kl_loss(&LatentGaussian { mu: vec![0.0; 5], log_var: vec![0.0; 5] }), 0.0);
    }

    #[test]
    fn sample_latent_argument_checks_and_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_latent(LatentSource::Prior { width: 2, sigma: 1.3 }, 0, &mut rng),
            Err(EpnError::Argument(_))
        ));
        let z = sample_latent(LatentSource::Prior { width: 1, sigma: 1.3 }, 20000, &mut rng).unwrap();
        let var = z.iter().map(|v| v[0] * v[0]).sum::<f64>() / z.len() as f64;
        assert!((var.sqrt() - 1.3).abs() < 0.03);
        let q = LatentGaussian { mu: vec![2.0], log_var: vec![(0.25f64).ln()] };
        let z = sample_latent(LatentSource::Posterior(&q), 20000, &mut rng).unwrap();
        let mean = z.iter().map(|v| v[0]).sum::<f64>() / z.len() as f64;
        let sd = (z.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        assert!((mean - 2.0).abs() < 0.02 && (sd - 0.5).abs() < 0.02);
    }

    #[test]
    fn with_params_rejects_mismatched_layout() {
        let a: Epn<f64> = Epn::new(ModelConfig::tiny(), Ablation::default(), 0).unwrap();
        let b = Epn::with_params(ModelConfig::tiny(), Ablation::default(), a.params.clone()).unwrap();
        assert_eq!(a.params.get(a.params.find("decoder.head.weight").unwrap()), b.params.get(b.params.find("decoder.head.weight").unwrap()));
        let err = Epn::with_params(ModelConfig::tiny(), Ablation { use_plan: false, ..Default::default() }, a.params.clone());
        assert!(matches!(err, Err(EpnError::Checkpoint(_))));
    }
}
