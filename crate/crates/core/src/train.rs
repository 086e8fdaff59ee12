//! Loss computation, the training loop, run configuration and checkpoints.

use std::io::Write as _;
use std::path::Path;

use epn_autodiff::{Adam, AdamState, Graph, Matrix, ParamStore, Real};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, SceneWindow};
use crate::error::{EpnError, Result};
use crate::metrics::MetricReport;
use crate::model::{Ablation, Batch, Epn, LatentGaussian, ModelConfig, TrainOutput};

pub const CHECKPOINT_MAGIC: &str = "EPN-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    /// Steps trained with the KL term switched off.
    pub kl_anneal_start: u64,
    /// Length of the linear ramp of the KL weight from 0 to `kl_weight`
    /// that follows `kl_anneal_start`.
    pub kl_warmup_steps: u64,
    pub seed: u64,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: f64,
    pub ablation: Ablation,
    pub precision: Precision,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    /// Hypotheses per window for validation.
    pub eval_k: usize,
    /// Score only the first this-many validation windows.
    pub val_limit: Option<usize>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 15,
            learning_rate: 0.001,
            kl_weight: 1.0,
            kl_anneal_start: 0,
            kl_warmup_steps: 0,
            seed: 42,
            clip_norm: 10.0,
            ablation: Ablation::default(),
            precision: Precision::F32,
            max_steps: None,
            eval_k: 6,
            val_limit: None,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_k == 0 {
            return Err(EpnError::Config("batch_size, epochs and eval_k must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.kl_weight >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(EpnError::Config("learning_rate and clip_norm must be positive, kl_weight non-negative".into()));
        }
        Ok(())
    }

    /// KL weight in effect for optimizer step `step` (1-based).
    pub fn kl_weight_at(&self, step: u64) -> f64 {
        if step <= self.kl_anneal_start {
            return 0.0;
        }
        let into = step - self.kl_anneal_start;
        if into >= self.kl_warmup_steps {
            self.kl_weight
        } else {
            self.kl_weight * into as f64 / self.kl_warmup_steps as f64
        }
    }
}

/// `[model]` and `[train]` tables of a run config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| EpnError::Config(e.to_string()))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            EpnError::Config(m) => EpnError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Loss terms of one batch. `total = trajectory + endpoint + kl_weight · kl`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub trajectory: f64,
    pub endpoint: f64,
    pub kl: f64,
    pub total: f64,
}

/// Training-mode outputs read back from the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardValues {
    /// Per window, `tf` target-frame positions.
    pub trajectories: Vec<Vec<[f64; 2]>>,
    pub refined: Vec<[f64; 2]>,
    pub posterior: Vec<LatentGaussian>,
}

impl ForwardValues {
    pub fn read<T: Real>(g: &Graph<T>, out: &TrainOutput) -> Self {
        let m = |id| g.value(id);
        let rows = |x: &Matrix<T>| (0..x.rows()).map(|r| x.row(r).iter().map(|v| v.to_f64_lossless()).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let pairs = |v: Vec<f64>| v.chunks(2).map(|c| [c[0], c[1]]).collect::<Vec<_>>();
        let trajectories = rows(m(out.trajectory)).into_iter().map(pairs).collect();
        let refined = rows(m(out.refined)).into_iter().map(|r| [r[0], r[1]]).collect();
        let posterior = rows(m(out.mu)).into_iter().zip(rows(m(out.log_var))).map(|(mu, log_var)| LatentGaussian { mu, log_var }).collect();
        Self { trajectories, refined, posterior }
    }
}

fn finite(component: &str, v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EpnError::Divergence { component: component.into(), step })
    }
}

/// Mean-squared trajectory and endpoint errors plus the batch-mean KL term.
pub fn compute_loss(
    out: &ForwardValues,
    truth: &[Vec<[f64; 2]>],
    endpoints: &[[f64; 2]],
    kl_weight: f64,
    step: u64,
) -> Result<LossComponents> {
    let n = out.trajectories.len();
    if n == 0 || truth.len() != n || endpoints.len() != n || out.refined.len() != n || out.posterior.len() != n {
        return Err(EpnError::Shape("loss inputs disagree on batch size".into()));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for (p, t) in out.trajectories.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(EpnError::Shape(format!("trajectory has {} steps, truth {}", p.len(), t.len())));
        }
        for (a, b) in p.iter().zip(t) {
            sq += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            count += 2;
        }
    }
    let trajectory = finite("trajectory_loss", sq / count as f64, step)?;
    let esq: f64 = out.refined.iter().zip(endpoints).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum();
    let endpoint = finite("endpoint_loss", esq / (2 * n) as f64, step)?;
    let kl = finite("kl", out.posterior.iter().map(crate::model::kl_loss).sum::<f64>() / n as f64, step)?;
    let total = finite("total_loss", trajectory + endpoint + kl_weight * kl, step)?;
    Ok(LossComponents { trajectory, endpoint, kl, total })
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: u64,
    /// `train` (epoch mean of batch losses) or `val`.
    pub split: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<LossComponents>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ade: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fde: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string (it is 128 bits wide).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: hex::encode(rng.get_seed()), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |what: &str| EpnError::Checkpoint(format!("invalid rng {what}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed length"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word position"))?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// Everything needed to reload a model or resume training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub params: Vec<NamedTensor>,
    pub rng: RngState,
    pub optimizer: Option<OptimizerState>,
    pub validation: Option<MetricReport>,
    #[serde(default)]
    pub manifest: Option<String>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| EpnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)
            .map_err(|e| EpnError::Checkpoint(format!("{}: unreadable checkpoint ({e})", path.display())))?;
        if ckpt.magic != CHECKPOINT_MAGIC {
            return Err(EpnError::Checkpoint(format!("{}: bad magic `{}`", path.display(), ckpt.magic)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(EpnError::Checkpoint(format!("{}: unsupported version {}", path.display(), ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn param_store<T: Real>(&self) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for p in &self.params {
            if p.data.len() != p.rows * p.cols {
                return Err(EpnError::Checkpoint(format!("parameter `{}` has {} values for shape {}x{}", p.name, p.data.len(), p.rows, p.cols)));
            }
            if store.find(&p.name).is_some() {
                return Err(EpnError::Checkpoint(format!("duplicate parameter `{}`", p.name)));
            }
            store.insert(p.name.clone(), Matrix::from_vec(p.rows, p.cols, p.data.iter().map(|&v| T::of(v)).collect()));
        }
        Ok(store)
    }

    /// The stored model at precision `T`.
    pub fn model<T: Real>(&self) -> Result<Epn<T>> {
        Epn::with_params(self.model.clone(), self.train.ablation, self.param_store()?)
    }

    /// Checks that the stored model matches an expected architecture.
    pub fn ensure_compatible(&self, model: &ModelConfig, ablation: &Ablation) -> Result<()> {
        if &self.model != model {
            return Err(EpnError::Checkpoint("checkpoint model configuration differs from the requested one".into()));
        }
        if &self.train.ablation != ablation {
            return Err(EpnError::Checkpoint(format!("checkpoint ablation {:?} differs from {ablation:?}", self.train.ablation)));
        }
        Ok(())
    }
}

/// Optimizer, random stream and counters around a model.
pub struct Trainer<T: Real> {
    pub model: Epn<T>,
    pub config: TrainConfig,
    adam: Adam<T>,
    rng: ChaCha8Rng,
    pub epoch: usize,
    pub step: u64,
    pub log: Vec<LogRecord>,
    /// Per-step losses, in order.
    pub curve: Vec<LossComponents>,
    pub best: Option<(f64, Checkpoint)>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Epn::new(model, config.ablation, config.seed)?;
        let adam = Adam::new(&model.params, config.learning_rate).with_clip_norm(config.clip_norm);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self { model, config, adam, rng, epoch: 0, step: 0, log: Vec::new(), curve: Vec::new(), best: None })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let model = ckpt.model::<T>()?;
        let mut adam = Adam::new(&model.params, ckpt.train.learning_rate).with_clip_norm(ckpt.train.clip_norm);
        let opt = ckpt.optimizer.as_ref().ok_or_else(|| EpnError::Checkpoint("checkpoint has no optimizer state".into()))?;
        adam.restore(&AdamState { step: opt.step, first: opt.first.clone(), second: opt.second.clone() }).map_err(EpnError::Checkpoint)?;
        let best = ckpt.validation.as_ref().map(|v| (v.ade, ckpt.clone()));
        Ok(Self {
            model,
            config: ckpt.train.clone(),
            adam,
            rng: ckpt.rng.restore()?,
            epoch: ckpt.epoch,
            step: ckpt.step,
            log: Vec::new(),
            curve: Vec::new(),
            best,
        })
    }

    pub fn checkpoint(&self, validation: Option<MetricReport>) -> Checkpoint {
        let st = self.adam.state();
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            model: self.model.config.clone(),
            train: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            params: self
                .model
                .params
                .iter()
                .map(|(_, name, m)| NamedTensor {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().iter().map(|v| v.to_f64_lossless()).collect(),
                })
                .collect(),
            rng: RngState::capture(&self.rng),
            optimizer: Some(OptimizerState { step: st.step, first: st.first, second: st.second }),
            validation,
            manifest: None,
        }
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.step >= m)
    }

    /// One optimizer update on `windows`.
    pub fn train_step(&mut self, windows: &[&SceneWindow]) -> Result<LossComponents> {
        let step = self.step + 1;
        let batch = Batch::<T>::new(windows, &self.model.config, self.model.ablation.use_plan)?;
        let lw = self.model.config.latent_width;
        let eps = Matrix::from_fn(batch.size, lw, |_, _| T::of(self.rng.sample::<f64, _>(StandardNormal)));
        let grads = {
            let mut g = Graph::new(&self.model.params);
            let out = self.model.forward_train(&mut g, &batch, eps, self.config.kl_weight_at(step));
            let v = |id| g.value(id)[(0, 0)].to_f64_lossless();
            let loss = LossComponents {
                trajectory: finite("trajectory_loss", v(out.trajectory_loss), step)?,
                endpoint: finite("endpoint_loss", v(out.endpoint_loss), step)?,
                kl: finite("kl", v(out.kl), step)?,
                total: finite("total_loss", v(out.total), step)?,
            };
            let grads = g.backward(out.total).into_param_grads(&self.model.params);
            if !grads.iter().all(|m| m.all_finite()) {
                return Err(EpnError::Divergence { component: "gradient".into(), step });
            }
            self.curve.push(loss);
            grads
        };
        self.adam.step(&mut self.model.params, &grads);
        self.step = step;
        Ok(*self.curve.last().expect("loss recorded"))
    }

    /// Training-mode loss on `windows` without updating anything; the
    /// posterior noise comes from its own generator seeded with `seed`.
    pub fn loss_on(&self, windows: &[&SceneWindow], seed: u64) -> Result<LossComponents> {
        let batch = Batch::<T>::new(windows, &self.model.config, self.model.ablation.use_plan)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = Matrix::from_fn(batch.size, self.model.config.latent_width, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)));
        let mut g = Graph::new(&self.model.params);
        let out = self.model.forward_train(&mut g, &batch, eps, self.config.kl_weight);
        let v = |id| g.value(id)[(0, 0)].to_f64_lossless();
        Ok(LossComponents { trajectory: v(out.trajectory_loss), endpoint: v(out.endpoint_loss), kl: v(out.kl), total: v(out.total) })
    }

    /// One pass over `train` in seeded random order; returns the mean batch loss.
    pub fn run_epoch(&mut self, train: &[SceneWindow]) -> Result<LossComponents> {
        if train.is_empty() {
            return Err(EpnError::Argument("empty training split".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        if self.config.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut sum = LossComponents::default();
        let mut n = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            if self.done() {
                break;
            }
            let ws: Vec<&SceneWindow> = chunk.iter().map(|&i| &train[i]).collect();
            let l = self.train_step(&ws)?;
            sum.trajectory += l.trajectory;
            sum.endpoint += l.endpoint;
            sum.kl += l.kl;
            sum.total += l.total;
            n += 1.0;
        }
        self.epoch += 1;
        let mean = if n > 0.0 {
            LossComponents { trajectory: sum.trajectory / n, endpoint: sum.endpoint / n, kl: sum.kl / n, total: sum.total / n }
        } else {
            sum
        };
        self.log.push(LogRecord { epoch: self.epoch, step: self.step, split: "train".into(), loss: Some(mean), ade: None, fde: None });
        Ok(mean)
    }

    /// Best-of-k metrics on `windows` with the inference path.
    pub fn evaluate(&self, windows: &[SceneWindow]) -> Result<MetricReport> {
        let limit = self.config.val_limit.unwrap_or(usize::MAX).min(windows.len());
        let refs: Vec<&SceneWindow> = windows[..limit].iter().collect();
        let sets = self.model.predict(&refs, self.config.eval_k, self.config.seed)?;
        MetricReport::from_predictions(&sets, &refs)
    }

    /// Trains until the configured epochs (or step budget) are used up.
    /// `on_epoch` receives each end-of-epoch checkpoint and whether it is the
    /// best so far by validation ADE.
    pub fn fit(&mut self, split: &DatasetSplit, mut on_epoch: impl FnMut(&Checkpoint, bool) -> Result<()>) -> Result<()> {
        if split.train.is_empty() {
            return Err(EpnError::Argument("empty training split".into()));
        }
        while self.epoch < self.config.epochs && !self.done() {
            self.run_epoch(&split.train)?;
            let report = if split.val.is_empty() { None } else { Some(self.evaluate(&split.val)?) };
            if let Some(r) = &report {
                self.log.push(LogRecord {
                    epoch: self.epoch,
                    step: self.step,
                    split: "val".into(),
                    loss: None,
                    ade: Some(r.ade),
                    fde: Some(r.fde),
                });
            }
            let ckpt = self.checkpoint(report.clone());
            let score = report.as_ref().map_or(f64::INFINITY, |r| r.ade);
            let is_best = match &self.best {
                None => true,
                Some((b, _)) => score < *b,
            };
            if is_best {
                self.best = Some((score, ckpt.clone()));
            }
            on_epoch(&ckpt, is_best)?;
        }
        Ok(())
    }
}

/// Appends log records as JSON lines.
pub fn append_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| EpnError::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(f, "{line}").map_err(|e| EpnError::io(path, e))?;
    }
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
