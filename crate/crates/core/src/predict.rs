//! Multimodal prediction: latent draws, decoding and integration to absolute
//! trajectories, plus the on-disk prediction record.

use std::path::Path;

use epn_autodiff::{Graph, Matrix, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SceneWindow;
use crate::error::{EpnError, Result};
use crate::model::{sample_latent, Batch, EndpointHypothesis, Epn, LatentSource};

pub const PREDICTION_MAGIC: &str = "EPN-PRED";
pub const PREDICTION_VERSION: u32 = 1;

/// Windows decoded per graph.
const CHUNK: usize = 64;

/// Running sum of displacements starting from `origin`, left to right.
pub fn integrate_displacements(origin: [f64; 2], deltas: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = origin;
    deltas
        .iter()
        .map(|d| {
            p = [p[0] + d[0], p[1] + d[1]];
            p
        })
        .collect()
}

/// Inverse of [`integrate_displacements`].
pub fn displacements_between(origin: [f64; 2], positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut prev = origin;
    positions
        .iter()
        .map(|p| {
            let d = [p[0] - prev[0], p[1] - prev[1]];
            prev = *p;
            d
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Absolute endpoint coordinates.
    pub endpoint: EndpointHypothesis,
    pub displacements: Vec<[f64; 2]>,
    /// Absolute positions for the `tf` future steps.
    pub trajectory: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub window_id: u64,
    pub target_id: i64,
    /// Target position at the present step.
    pub origin: [f64; 2],
    pub hypotheses: Vec<Hypothesis>,
}

impl PredictionSet {
    pub fn trajectories(&self) -> Vec<Vec<[f64; 2]>> {
        self.hypotheses.iter().map(|h| h.trajectory.clone()).collect()
    }
}

/// Latent codes for one window. Each window has its own random stream, so
/// the first `k` codes do not depend on how many are drawn or on batching.
pub fn window_latents(seed: u64, window_id: u64, k: usize, width: usize, sigma: f64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(window_id);
    sample_latent(LatentSource::Prior { width, sigma }, k, &mut rng)
}

impl<T: Real> Epn<T> {
    /// `k` hypotheses per window, reproducible under `seed`.
    pub fn predict(&self, windows: &[&SceneWindow], k: usize, seed: u64) -> Result<Vec<PredictionSet>> {
        if k == 0 {
            return Err(EpnError::Argument("number of hypotheses must be at least 1".into()));
        }
        let (tf, lw) = (self.config.tf, self.config.latent_width);
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(CHUNK) {
            let batch = Batch::new(chunk, &self.config, self.ablation.use_plan)?;
            let mut z = Vec::with_capacity(chunk.len() * k * lw);
            for w in chunk {
                for code in window_latents(seed, w.window_id, k, lw, self.config.sigma_t)? {
                    z.extend(code.into_iter().map(T::of));
                }
            }
            let mut g = Graph::new(&self.params);
            let o = self.forward_infer(&mut g, &batch, Matrix::from_vec(chunk.len() * k, lw, z), k);
            let raw = g.value(o.raw);
            let offset = o.offset.map(|id| g.value(id));
            let deltas = g.value(o.deltas);
            for (b, w) in chunk.iter().enumerate() {
                let origin = batch.origins[b];
                let hypotheses = (0..k)
                    .map(|j| {
                        let r = b * k + j;
                        let f = |m: &Matrix<T>, c: usize| m[(r, c)].to_f64_lossless();
                        let raw_abs = [origin[0] + f(raw, 0), origin[1] + f(raw, 1)];
                        let off = offset.map(|m| [f(m, 0), f(m, 1)]).unwrap_or([0.0, 0.0]);
                        let displacements: Vec<[f64; 2]> = (0..tf).map(|t| [f(deltas, 2 * t), f(deltas, 2 * t + 1)]).collect();
                        Hypothesis {
                            endpoint: EndpointHypothesis::new(raw_abs, off),
                            trajectory: integrate_displacements(origin, &displacements),
                            displacements,
                        }
                    })
                    .collect();
                out.push(PredictionSet { window_id: w.window_id, target_id: w.target_id, origin, hypotheses });
            }
        }
        Ok(out)
    }
}

/// A prediction set together with the scene context needed to plot it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub prediction: PredictionSet,
    pub history: Vec<[f64; 2]>,
    pub truth: Vec<[f64; 2]>,
    pub ego_id: i64,
    pub ego_plan: Vec<[f64; 2]>,
    /// `(vehicle_id, history)` of every neighbor.
    pub neighbors: Vec<(i64, Vec<[f64; 2]>)>,
}

impl PredictionEntry {
    pub fn new(prediction: PredictionSet, window: &SceneWindow) -> Self {
        let path = |s: &[crate::data::State]| s.iter().map(|s| s.position()).collect::<Vec<_>>();
        Self {
            prediction,
            history: path(&window.target.states),
            truth: path(&window.future),
            ego_id: window.ego_id,
            ego_plan: window.ego_plan.clone(),
            neighbors: window.neighbors.iter().map(|n| (n.vehicle_id, path(&n.states))).collect(),
        }
    }
}

/// Output of the `predict` command; coordinates in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub magic: String,
    pub version: u32,
    pub k: usize,
    pub seed: u64,
    pub checkpoint: Option<String>,
    pub manifest: Option<String>,
    pub entries: Vec<PredictionEntry>,
}

impl PredictionRecord {
    pub fn new(k: usize, seed: u64, entries: Vec<PredictionEntry>) -> Self {
        Self { magic: PREDICTION_MAGIC.into(), version: PREDICTION_VERSION, k, seed, checkpoint: None, manifest: None, entries }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| EpnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
        let rec: Self = serde_json::from_str(&text)
            .map_err(|e| EpnError::Argument(format!("{}: not a prediction record ({e})", path.display())))?;
        if rec.magic != PREDICTION_MAGIC || rec.version != PREDICTION_VERSION {
            return Err(EpnError::Argument(format!("{}: not a version {PREDICTION_VERSION} prediction record", path.display())));
        }
        Ok(rec)
    }
}
