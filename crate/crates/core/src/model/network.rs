use epn_autodiff::nn::{Activation, Conv2d, Linear, Lstm, Mlp};
use epn_autodiff::{Graph, GridShape, Matrix, NodeId, ParamStore, Real, ZERO_SLOT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::config::{Ablation, ModelConfig};
use crate::error::{EpnError, Result};

/// History channel of a vehicle track.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Position,
    Velocity,
    Acceleration,
}

impl Channel {
    pub fn width(self) -> usize {
        match self {
            Channel::Position => 2,
            _ => 1,
        }
    }
}

/// Per-step embedding followed by an LSTM; the final hidden state is the feature.
#[derive(Clone, Debug)]
pub(crate) struct SequenceEncoder {
    embed: Linear,
    lstm: Lstm,
}

impl SequenceEncoder {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, embed: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            embed: Linear::new(store, &format!("{name}.embed"), input, embed, rng),
            lstm: Lstm::new(store, &format!("{name}.lstm"), embed, hidden, rng),
        }
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, steps: &[NodeId], slope: T) -> NodeId {
        let inputs: Vec<NodeId> = steps
            .iter()
            .map(|&x| {
                let e = self.embed.forward(g, x);
                g.leaky_relu(e, slope)
            })
            .collect();
        self.lstm.unroll(g, &inputs).h
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PoolStream {
    conv1: Conv2d,
    conv2: Conv2d,
}

#[derive(Clone, Debug)]
pub(crate) struct Layers {
    position: SequenceEncoder,
    velocity: Option<SequenceEncoder>,
    acceleration: Option<SequenceEncoder>,
    fuse: Linear,
    dynamic: Linear,
    plan: Option<(SequenceEncoder, Linear)>,
    neighbor_pool: PoolStream,
    plan_pool: PoolStream,
    endpoint_encoder: Mlp,
    latent_encoder: Mlp,
    latent_decoder: Mlp,
    refiner: Option<Mlp>,
    decoder: Lstm,
    head: Linear,
}

/// Encoder outputs for a batch.
#[derive(Clone, Copy, Debug)]
pub struct Encoding {
    /// `vehicles × d` fused per-vehicle vectors.
    pub fused: NodeId,
    pub t_nei: NodeId,
    pub t_plan: NodeId,
    pub social: NodeId,
    pub dynamic: NodeId,
    pub enc: NodeId,
}

/// Nodes of one training-mode pass. Endpoints and trajectories are in
/// target-frame meters.
#[derive(Clone, Copy, Debug)]
pub struct TrainOutput {
    pub encoding: Encoding,
    pub mu: NodeId,
    pub log_var: NodeId,
    pub z: NodeId,
    pub raw: NodeId,
    pub offset: Option<NodeId>,
    pub refined: NodeId,
    pub trajectory: NodeId,
    pub trajectory_loss: NodeId,
    pub endpoint_loss: NodeId,
    pub kl: NodeId,
    pub total: NodeId,
}

/// Nodes of one inference pass; rows are window-major, `k` per window.
#[derive(Clone, Debug)]
pub struct InferOutput {
    pub encoding: Encoding,
    pub raw: NodeId,
    pub offset: Option<NodeId>,
    pub refined: NodeId,
    /// `rows × 2 tf` per-step displacements, meters.
    pub deltas: NodeId,
    pub trajectory: NodeId,
}

/// The trajectory predictor: parameters plus the layer layout that reads them.
#[derive(Clone, Debug)]
pub struct Epn<T: Real> {
    pub config: ModelConfig,
    pub ablation: Ablation,
    pub params: ParamStore<T>,
    pub(crate) layers: Layers,
}

fn stream<T: Real>(store: &mut ParamStore<T>, name: &str, c: &ModelConfig, rng: &mut ChaCha8Rng) -> PoolStream {
    PoolStream {
        conv1: Conv2d::new(store, &format!("{name}.conv1"), c.conv1.kernel, c.fused_width, c.conv1.channels, rng),
        conv2: Conv2d::new(store, &format!("{name}.conv2"), c.conv2.kernel, c.conv1.channels, c.conv2.channels, rng),
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl<T: Real> Epn<T> {
    /// Fresh model with parameters drawn from a seeded generator.
    pub fn new(config: ModelConfig, ablation: Ablation, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let s = &mut store;
        let rng = &mut rng;
        let h = c.encoder_hidden;
        let leaky = Activation::LeakyRelu(c.leaky_slope);

        let position = SequenceEncoder::new(s, "encoder.position", 2, c.position_embedding, h, rng);
        let velocity = ablation.use_velocity.then(|| SequenceEncoder::new(s, "encoder.velocity", 1, c.velocity_embedding, h, rng));
        let acceleration =
            ablation.use_acceleration.then(|| SequenceEncoder::new(s, "encoder.acceleration", 1, c.acceleration_embedding, h, rng));
        let channels = 1 + ablation.use_velocity as usize + ablation.use_acceleration as usize;
        let fuse = Linear::new(s, "encoder.fuse", channels * h, c.fused_width, rng);
        let dynamic = Linear::new(s, "encoder.dynamic", c.fused_width, c.dynamic_width, rng);
        let plan = ablation.use_plan.then(|| {
            let enc = SequenceEncoder::new(s, "plan", 2, c.plan_embedding, h, rng);
            let proj = Linear::new(s, "plan.project", h, c.fused_width, rng);
            (enc, proj)
        });
        let neighbor_pool = stream(s, "pool.neighbors", c, rng);
        let plan_pool = stream(s, "pool.plan", c, rng);

        let env = c.environment_width()?;
        let ef = c.endpoint_feature;
        let endpoint_encoder = Mlp::new(s, "cvae.endpoint", &widths(2, &c.mlp_hidden, ef), leaky, Activation::Identity, rng);
        let latent_encoder =
            Mlp::new(s, "cvae.posterior", &widths(env + ef, &c.mlp_hidden, 2 * c.latent_width), leaky, Activation::Identity, rng);
        let latent_decoder =
            Mlp::new(s, "cvae.endpoint_decoder", &widths(env + c.latent_width, &c.mlp_hidden, 2), leaky, Activation::Identity, rng);
        let refiner = ablation
            .use_refinement
            .then(|| Mlp::new(s, "cvae.refiner", &widths(env + ef, &c.mlp_hidden, 2), leaky, Activation::Identity, rng));
        let decoder = Lstm::new(s, "decoder.lstm", env + ef, c.decoder_hidden, rng);
        let head = Linear::new(s, "decoder.head", c.decoder_hidden, 2, rng);

        let layers = Layers {
            position,
            velocity,
            acceleration,
            fuse,
            dynamic,
            plan,
            neighbor_pool,
            plan_pool,
            endpoint_encoder,
            latent_encoder,
            latent_decoder,
            refiner,
            decoder,
            head,
        };
        Ok(Self { config, ablation, params: store, layers })
    }

    /// Model with the given parameter values; names and shapes must match the
    /// layout implied by `config` and `ablation` exactly.
    pub fn with_params(config: ModelConfig, ablation: Ablation, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, ablation, 0)?;
        if params.len() != model.params.len() {
            return Err(EpnError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (_, name, value) in params.iter() {
            let slot = model
                .params
                .find(name)
                .ok_or_else(|| EpnError::Checkpoint(format!("unexpected parameter `{name}`")))?;
            let expected = model.params.get(slot).shape();
            if expected != value.shape() {
                return Err(EpnError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {expected:?}",
                    value.shape()
                )));
            }
            *model.params.get_mut(slot) = value.clone();
        }
        Ok(model)
    }

    /// Same model in another precision.
    pub fn cast<U: Real>(&self) -> Epn<U> {
        Epn { config: self.config.clone(), ablation: self.ablation, params: self.params.cast(), layers: self.layers.clone() }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn slope(&self) -> T {
        T::of(self.config.leaky_slope)
    }

    fn leaky(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let s = self.slope();
        g.leaky_relu(x, s)
    }

    pub(crate) fn channel_encoder(&self, channel: Channel) -> Result<&SequenceEncoder> {
        let l = &self.layers;
        match channel {
            Channel::Position => Some(&l.position),
            Channel::Velocity => l.velocity.as_ref(),
            Channel::Acceleration => l.acceleration.as_ref(),
        }
        .ok_or_else(|| EpnError::Argument(format!("{channel:?} channel is disabled in this model")))
    }

    pub(crate) fn track_node(&self, g: &mut Graph<T>, channel: Channel, steps: &[NodeId]) -> Result<NodeId> {
        let enc = self.channel_encoder(channel)?;
        Ok(enc.forward(g, steps, self.slope()))
    }

    pub(crate) fn fuse_node(&self, g: &mut Graph<T>, h_p: NodeId, h_v: Option<NodeId>, h_a: Option<NodeId>) -> NodeId {
        let mut parts = vec![h_p];
        parts.extend(h_v);
        parts.extend(h_a);
        let cat = if parts.len() == 1 { h_p } else { g.concat_cols(&parts) };
        let y = self.layers.fuse.forward(g, cat);
        self.leaky(g, y)
    }

    pub(crate) fn dynamic_node(&self, g: &mut Graph<T>, target: NodeId) -> NodeId {
        let y = self.layers.dynamic.forward(g, target);
        self.leaky(g, y)
    }

    pub(crate) fn plan_node(&self, g: &mut Graph<T>, steps: &[NodeId]) -> Result<NodeId> {
        let (enc, proj) = self.layers.plan.as_ref().ok_or_else(|| EpnError::Argument("plan pathway is disabled in this model".into()))?;
        let h = enc.forward(g, steps, self.slope());
        let y = proj.forward(g, h);
        Ok(self.leaky(g, y))
    }

    fn pool_stream(&self, g: &mut Graph<T>, x: NodeId, s: &PoolStream) -> NodeId {
        let c = &self.config;
        let shape = GridShape::new(c.grid.rows, c.grid.cols, c.fused_width);
        let (y, shape) = s.conv1.forward(g, x, shape);
        let y = g.relu(y);
        let (y, shape) = g.max_pool(y, shape, c.pool1);
        let (y, shape) = s.conv2.forward(g, y, shape);
        let y = g.relu(y);
        g.max_pool(y, shape, c.pool2).0
    }

    /// Both tensors are `batch × (rows·cols·d)`, channels last.
    pub(crate) fn pool_node(&self, g: &mut Graph<T>, t_nei: NodeId, t_plan: NodeId) -> NodeId {
        let a = self.pool_stream(g, t_nei, &self.layers.neighbor_pool);
        let b = self.pool_stream(g, t_plan, &self.layers.plan_pool);
        g.concat_cols(&[a, b])
    }

    /// Multiplies the two columns of `x` by `s[0]` and `s[1]`.
    fn axis_scale(&self, g: &mut Graph<T>, x: NodeId, s: [f64; 2]) -> NodeId {
        let d = g.constant(Matrix::from_fn(2, 2, |r, c| if r == c { T::of(s[r]) } else { T::zero() }));
        g.matmul(x, d)
    }

    /// Endpoint in meters to its feature vector.
    pub(crate) fn endpoint_feature_node(&self, g: &mut Graph<T>, endpoint: NodeId) -> NodeId {
        let s = self.config.future_scale;
        let x = self.axis_scale(g, endpoint, [1.0 / s[0], 1.0 / s[1]]);
        self.layers.endpoint_encoder.forward(g, x)
    }

    pub(crate) fn posterior_nodes(&self, g: &mut Graph<T>, enc: NodeId, end_feature: NodeId) -> (NodeId, NodeId) {
        let x = g.concat_cols(&[enc, end_feature]);
        let y = self.layers.latent_encoder.forward(g, x);
        let l = self.config.latent_width;
        (g.slice_cols(y, 0, l), g.slice_cols(y, l, l))
    }

    pub(crate) fn raw_endpoint_node(&self, g: &mut Graph<T>, enc: NodeId, z: NodeId) -> NodeId {
        let x = g.concat_cols(&[enc, z]);
        let y = self.layers.latent_decoder.forward(g, x);
        self.axis_scale(g, y, self.config.future_scale)
    }

    /// `(offset, refined)`; without the refinement pathway the raw endpoint is used as is.
    pub(crate) fn refine_nodes(&self, g: &mut Graph<T>, enc: NodeId, raw: NodeId) -> (Option<NodeId>, NodeId) {
        match &self.layers.refiner {
            Some(refiner) => {
                let f = self.endpoint_feature_node(g, raw);
                let x = g.concat_cols(&[enc, f]);
                let y = refiner.forward(g, x);
                let offset = self.axis_scale(g, y, self.config.future_scale);
                (Some(offset), g.add(raw, offset))
            }
            None => (None, raw),
        }
    }

    /// `(deltas, positions)`, both `rows × 2 tf` in meters, positions relative to the present.
    pub(crate) fn decode_nodes(&self, g: &mut Graph<T>, enc: NodeId, endpoint: NodeId) -> (NodeId, NodeId) {
        let f = self.endpoint_feature_node(g, endpoint);
        let x = g.concat_cols(&[enc, f]);
        let scale = T::of(self.config.displacement_scale);
        let mut state = None;
        let mut deltas = Vec::with_capacity(self.config.tf);
        let mut positions = Vec::with_capacity(self.config.tf);
        for _ in 0..self.config.tf {
            let s = self.layers.decoder.step(g, x, state);
            state = Some(s);
            let d = self.layers.head.forward(g, s.h);
            let d = g.scale(d, scale);
            let p = match positions.last() {
                Some(&prev) => g.add(prev, d),
                None => d,
            };
            deltas.push(d);
            positions.push(p);
        }
        (g.concat_cols(&deltas), g.concat_cols(&positions))
    }

    /// Gather index placing vehicle rows of `src` (width `d`) into grid cells.
    fn cell_index(&self, rows_per_window: &[Vec<(usize, usize)>]) -> Vec<usize> {
        let d = self.config.fused_width;
        let cells = self.config.grid.num_cells();
        let mut index = vec![ZERO_SLOT; rows_per_window.len() * cells * d];
        for (b, placed) in rows_per_window.iter().enumerate() {
            for &(cell, row) in placed {
                let start = (b * cells + cell) * d;
                for f in 0..d {
                    index[start + f] = row * d + f;
                }
            }
        }
        index
    }

    pub fn encode(&self, g: &mut Graph<T>, batch: &Batch<T>) -> Encoding {
        let consts = |g: &mut Graph<T>, ms: &[Matrix<T>]| ms.iter().map(|m| g.constant(m.clone())).collect::<Vec<_>>();
        let pos = consts(g, &batch.positions);
        let h_p = self.layers.position.forward(g, &pos, self.slope());
        let h_v = self.layers.velocity.as_ref().map(|e| {
            let v = consts(g, &batch.velocities);
            e.forward(g, &v, self.slope())
        });
        let h_a = self.layers.acceleration.as_ref().map(|e| {
            let a = consts(g, &batch.accelerations);
            e.forward(g, &a, self.slope())
        });
        let fused = self.fuse_node(g, h_p, h_v, h_a);
        let target = g.gather_rows(fused, &batch.target_rows);
        let dynamic = self.dynamic_node(g, target);

        let width = self.config.grid.num_cells() * self.config.fused_width;
        let b = batch.size;
        let t_nei = g.gather(fused, self.cell_index(&batch.neighbor_cells), b, width);
        let t_plan = if self.layers.plan.is_some() {
            let steps = consts(g, &batch.plan);
            let p = self.plan_node(g, &steps).expect("plan pathway present");
            let placed: Vec<Vec<(usize, usize)>> =
                batch.ego_cells.iter().enumerate().map(|(i, c)| c.map(|c| (c, i)).into_iter().collect()).collect();
            g.gather(p, self.cell_index(&placed), b, width)
        } else {
            g.constant(Matrix::zeros(b, width))
        };
        let social = self.pool_node(g, t_nei, t_plan);
        let enc = g.concat_cols(&[social, dynamic]);
        Encoding { fused, t_nei, t_plan, social, dynamic, enc }
    }

    /// Training pass: posterior sampling with `eps` (`batch × latent`) and the full loss.
    pub fn forward_train(&self, g: &mut Graph<T>, batch: &Batch<T>, eps: Matrix<T>, kl_weight: f64) -> TrainOutput {
        assert_eq!(eps.shape(), (batch.size, self.config.latent_width), "noise shape");
        let encoding = self.encode(g, batch);
        let enc = encoding.enc;
        let truth = g.constant(batch.endpoint.clone());
        let f = self.endpoint_feature_node(g, truth);
        let (mu, log_var) = self.posterior_nodes(g, enc, f);
        let half = g.scale(log_var, T::of(0.5));
        let std = g.exp(half);
        let eps = g.constant(eps);
        let noise = g.mul(std, eps);
        let z = g.add(mu, noise);
        let raw = self.raw_endpoint_node(g, enc, z);
        let (offset, refined) = self.refine_nodes(g, enc, raw);
        let (_, trajectory) = self.decode_nodes(g, enc, refined);

        let future = g.constant(batch.future.clone());
        let trajectory_loss = g.mse(trajectory, future);
        let endpoint_loss = g.mse(refined, truth);
        let kl = kl_node(g, mu, log_var);
        let data = g.add(trajectory_loss, endpoint_loss);
        let weighted = g.scale(kl, T::of(kl_weight));
        let total = g.add(data, weighted);
        TrainOutput { encoding, mu, log_var, z, raw, offset, refined, trajectory, trajectory_loss, endpoint_loss, kl, total }
    }

    /// Inference pass with latent draws `z` (`batch·k × latent`, window-major).
    pub fn forward_infer(&self, g: &mut Graph<T>, batch: &Batch<T>, z: Matrix<T>, k: usize) -> InferOutput {
        assert_eq!(z.shape(), (batch.size * k, self.config.latent_width), "latent shape");
        let encoding = self.encode(g, batch);
        let rows: Vec<usize> = (0..batch.size).flat_map(|b| std::iter::repeat_n(b, k)).collect();
        let enc = if k == 1 { encoding.enc } else { g.gather_rows(encoding.enc, &rows) };
        let z = g.constant(z);
        let raw = self.raw_endpoint_node(g, enc, z);
        let (offset, refined) = self.refine_nodes(g, enc, raw);
        let (deltas, trajectory) = self.decode_nodes(g, enc, refined);
        InferOutput { encoding, raw, offset, refined, deltas, trajectory }
    }
}

/// Batch mean of the closed-form KL divergence to the unit Gaussian.
pub(crate) fn kl_node<T: Real>(g: &mut Graph<T>, mu: NodeId, log_var: NodeId) -> NodeId {
    let rows = g.shape(mu).0;
    let m2 = g.square(mu);
    let e = g.exp(log_var);
    let s = g.add(m2, e);
    let s = g.sub(s, log_var);
    let s = g.add_scalar(s, T::of(-1.0));
    let total = g.sum_all(s);
    g.scale(total, T::of(0.5 / rows as f64))
}
