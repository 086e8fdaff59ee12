//! Single-window entry points to each stage of the network, on plain `f64`
//! vectors. They build the same graph pieces the batched passes use.

use std::collections::HashMap;

use epn_autodiff::{Graph, Matrix, NodeId, Real};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::{Channel, Epn};
use crate::data::SceneWindow;
use crate::error::{EpnError, Result};
use crate::geometry::{build_occupancy_mask, build_plan_tensor, ego_cell, scatter_social_tensor, to_target_frame, Occupancy, SocialTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Diagonal Gaussian over the latent code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Where latent codes come from.
#[derive(Clone, Copy, Debug)]
pub enum LatentSource<'a> {
    /// Reparameterised draws from the recognition posterior.
    Posterior(&'a LatentGaussian),
    /// Zero-mean isotropic prior with standard deviation `sigma`.
    Prior { width: usize, sigma: f64 },
}

/// Draws `k` latent codes.
pub fn sample_latent<R: Rng + ?Sized>(source: LatentSource<'_>, k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(EpnError::Argument("number of latent samples must be at least 1".into()));
    }
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let out = match source {
        LatentSource::Posterior(p) => {
            if p.mu.len() != p.log_var.len() {
                return Err(EpnError::Shape(format!("mu has {} entries, log_var {}", p.mu.len(), p.log_var.len())));
            }
            (0..k)
                .map(|_| p.mu.iter().zip(&p.log_var).map(|(&m, &lv)| m + (0.5 * lv).exp() * normal()).collect())
                .collect()
        }
        LatentSource::Prior { width, sigma } => {
            if !(sigma > 0.0) {
                return Err(EpnError::Argument(format!("prior standard deviation must be positive, got {sigma}")));
            }
            (0..k).map(|_| (0..width).map(|_| sigma * normal()).collect()).collect()
        }
    };
    Ok(out)
}

/// KL divergence from a diagonal Gaussian to the unit Gaussian.
pub fn kl_loss(q: &LatentGaussian) -> f64 {
    0.5 * q.mu.iter().zip(&q.log_var).map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}

/// Raw endpoint, learned offset and their sum (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointHypothesis {
    pub raw: [f64; 2],
    pub offset: [f64; 2],
    pub refined: [f64; 2],
}

impl EndpointHypothesis {
    pub fn new(raw: [f64; 2], offset: [f64; 2]) -> Self {
        Self { raw, offset, refined: [raw[0] + offset[0], raw[1] + offset[1]] }
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        Self::new([self.raw[0] + by[0], self.raw[1] + by[1]], self.offset)
    }
}

/// Per-stage outputs of one window, composed from the single-window operations.
#[derive(Clone, Debug)]
pub struct WindowEncoding {
    pub occupancy: Occupancy,
    pub t_nei: SocialTensor<f64>,
    pub t_plan: SocialTensor<f64>,
    pub social: Vec<f64>,
    pub dynamic: Vec<f64>,
    pub enc: Vec<f64>,
}

fn row<T: Real>(g: &mut Graph<T>, v: &[f64]) -> NodeId {
    g.constant(Matrix::row_vector(v.iter().map(|&x| T::of(x)).collect()))
}

fn read<T: Real>(g: &Graph<T>, id: NodeId) -> Vec<f64> {
    g.value(id).data().iter().map(|v| v.to_f64_lossless()).collect()
}

fn check_width(what: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(EpnError::Shape(format!("{what} has width {}, expected {want}", v.len())));
    }
    Ok(())
}

impl<T: Real> Epn<T> {
    /// Encodes one channel of one vehicle's history (target-frame meters,
    /// m/s or m/s², oldest first) into a hidden-width vector.
    pub fn encode_track(&self, channel: Channel, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(EpnError::Shape("empty history".into()));
        }
        let scale = match channel {
            Channel::Position => self.config.history_scale,
            Channel::Velocity => self.config.velocity_scale,
            Channel::Acceleration => self.config.acceleration_scale,
        };
        let mut g = Graph::new(&self.params);
        let mut steps = Vec::with_capacity(history.len());
        for s in history {
            check_width("history step", s, channel.width())?;
            let scaled: Vec<f64> = s.iter().map(|v| v / scale).collect();
            steps.push(row(&mut g, &scaled));
        }
        let h = self.track_node(&mut g, channel, &steps)?;
        Ok(read(&g, h))
    }

    /// Fuses per-channel features into one vector; disabled channels must be `None`.
    pub fn fuse_vehicle(&self, h_p: &[f64], h_v: Option<&[f64]>, h_a: Option<&[f64]>) -> Result<Vec<f64>> {
        if h_v.is_some() != self.ablation.use_velocity || h_a.is_some() != self.ablation.use_acceleration {
            return Err(EpnError::Argument("supplied channels do not match the enabled channels".into()));
        }
        let h = self.config.encoder_hidden;
        let mut g = Graph::new(&self.params);
        check_width("position feature", h_p, h)?;
        let p = row(&mut g, h_p);
        let mut opt = |v: Option<&[f64]>, what: &str| -> Result<Option<NodeId>> {
            v.map(|v| {
                check_width(what, v, h)?;
                Ok(row(&mut g, v))
            })
            .transpose()
        };
        let v = opt(h_v, "velocity feature")?;
        let a = opt(h_a, "acceleration feature")?;
        let y = self.fuse_node(&mut g, p, v, a);
        Ok(read(&g, y))
    }

    pub fn dynamic_feature(&self, fused_target: &[f64]) -> Result<Vec<f64>> {
        check_width("target feature", fused_target, self.config.fused_width)?;
        let mut g = Graph::new(&self.params);
        let x = row(&mut g, fused_target);
        let y = self.dynamic_node(&mut g, x);
        Ok(read(&g, y))
    }

    /// Encodes the ego plan (`tf` target-frame positions) into a cell-width vector.
    pub fn encode_plan(&self, plan: &[[f64; 2]]) -> Result<Vec<f64>> {
        if plan.len() != self.config.tf {
            return Err(EpnError::Shape(format!("plan has {} steps, expected {}", plan.len(), self.config.tf)));
        }
        let s = self.config.future_scale;
        let mut g = Graph::new(&self.params);
        let steps: Vec<NodeId> = plan.iter().map(|p| row(&mut g, &[p[0] / s[0], p[1] / s[1]])).collect();
        let y = self.plan_node(&mut g, &steps)?;
        Ok(read(&g, y))
    }

    /// Convolutional pooling of the neighbor and plan tensors.
    pub fn social_pool(&self, t_nei: &SocialTensor<f64>, t_plan: &SocialTensor<f64>) -> Result<Vec<f64>> {
        let c = &self.config;
        for (what, t) in [("neighbor tensor", t_nei), ("plan tensor", t_plan)] {
            if (t.rows, t.cols, t.depth) != (c.grid.rows, c.grid.cols, c.fused_width) {
                return Err(EpnError::Shape(format!(
                    "{what} is {}x{}x{}, expected {}x{}x{}",
                    t.rows, t.cols, t.depth, c.grid.rows, c.grid.cols, c.fused_width
                )));
            }
        }
        let mut g = Graph::new(&self.params);
        let a = row(&mut g, &t_nei.data);
        let b = row(&mut g, &t_plan.data);
        let y = self.pool_node(&mut g, a, b);
        Ok(read(&g, y))
    }

    pub fn build_environment_feature(&self, social: &[f64], dynamic: &[f64]) -> Result<Vec<f64>> {
        check_width("social feature", social, self.config.social_width()?)?;
        check_width("dynamic feature", dynamic, self.config.dynamic_width)?;
        Ok(social.iter().chain(dynamic).copied().collect())
    }

    /// Feature of an endpoint given in target-frame meters.
    pub fn encode_endpoint(&self, endpoint: [f64; 2]) -> Vec<f64> {
        let mut g = Graph::new(&self.params);
        let x = row(&mut g, &endpoint);
        let y = self.endpoint_feature_node(&mut g, x);
        read(&g, y)
    }

    /// Recognition posterior; only defined while training.
    pub fn posterior(&self, enc: &[f64], endpoint_feature: &[f64], mode: Mode) -> Result<LatentGaussian> {
        if mode == Mode::Infer {
            return Err(EpnError::Mode("the posterior needs the ground-truth endpoint and is unavailable at inference".into()));
        }
        check_width("environment feature", enc, self.config.environment_width()?)?;
        check_width("endpoint feature", endpoint_feature, self.config.endpoint_feature)?;
        let mut g = Graph::new(&self.params);
        let e = row(&mut g, enc);
        let f = row(&mut g, endpoint_feature);
        let (mu, lv) = self.posterior_nodes(&mut g, e, f);
        Ok(LatentGaussian { mu: read(&g, mu), log_var: read(&g, lv) })
    }

    /// Raw endpoint (target-frame meters) for one latent code.
    pub fn decode_endpoint(&self, enc: &[f64], z: &[f64]) -> Result<[f64; 2]> {
        check_width("environment feature", enc, self.config.environment_width()?)?;
        check_width("latent code", z, self.config.latent_width)?;
        let mut g = Graph::new(&self.params);
        let e = row(&mut g, enc);
        let z = row(&mut g, z);
        let y = self.raw_endpoint_node(&mut g, e, z);
        let v = read(&g, y);
        Ok([v[0], v[1]])
    }

    /// Offset for a raw endpoint; zero when refinement is disabled.
    pub fn refine_endpoint(&self, enc: &[f64], raw: [f64; 2]) -> Result<EndpointHypothesis> {
        check_width("environment feature", enc, self.config.environment_width()?)?;
        let mut g = Graph::new(&self.params);
        let e = row(&mut g, enc);
        let r = row(&mut g, &raw);
        let (offset, _) = self.refine_nodes(&mut g, e, r);
        let offset = offset.map(|o| read(&g, o)).map(|v| [v[0], v[1]]).unwrap_or([0.0, 0.0]);
        Ok(EndpointHypothesis::new(raw, offset))
    }

    /// Per-step displacements (meters) towards `endpoint`.
    pub fn decode_trajectory(&self, enc: &[f64], endpoint: [f64; 2]) -> Result<Vec<[f64; 2]>> {
        check_width("environment feature", enc, self.config.environment_width()?)?;
        let mut g = Graph::new(&self.params);
        let e = row(&mut g, enc);
        let p = row(&mut g, &endpoint);
        let (deltas, _) = self.decode_nodes(&mut g, e, p);
        Ok(read(&g, deltas).chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    /// Runs the encoder stages one at a time for a single (unframed) window.
    pub fn encode_window(&self, window: &SceneWindow) -> Result<WindowEncoding> {
        let c = &self.config;
        window.validate(c.th, c.tf)?;
        let framed = to_target_frame(window);
        let occupancy = build_occupancy_mask(&framed, &c.grid);

        let encode_vehicle = |states: &[crate::data::State]| -> Result<Vec<f64>> {
            let p = self.encode_track(Channel::Position, &states.iter().map(|s| vec![s.x, s.y]).collect::<Vec<_>>())?;
            let v = if self.ablation.use_velocity {
                Some(self.encode_track(Channel::Velocity, &states.iter().map(|s| vec![s.v]).collect::<Vec<_>>())?)
            } else {
                None
            };
            let a = if self.ablation.use_acceleration {
                Some(self.encode_track(Channel::Acceleration, &states.iter().map(|s| vec![s.a]).collect::<Vec<_>>())?)
            } else {
                None
            };
            self.fuse_vehicle(&p, v.as_deref(), a.as_deref())
        };

        let mut features = HashMap::new();
        for a in occupancy.resolved() {
            features.insert(a.vehicle_id, encode_vehicle(&framed.neighbors[a.neighbor_index].states)?);
        }
        let t_nei = scatter_social_tensor(&occupancy, &features, c.fused_width)?;
        let t_plan = if self.ablation.use_plan {
            let plan = self.encode_plan(&framed.ego_plan)?;
            build_plan_tensor(&plan, ego_cell(&framed, &c.grid), &c.grid)?
        } else {
            SocialTensor::zeros(c.grid.rows, c.grid.cols, c.fused_width)
        };
        let social = self.social_pool(&t_nei, &t_plan)?;
        let target = encode_vehicle(&framed.target.states)?;
        let dynamic = self.dynamic_feature(&target)?;
        let enc = self.build_environment_feature(&social, &dynamic)?;
        Ok(WindowEncoding { occupancy, t_nei, t_plan, social, dynamic, enc })
    }
}
