use epn_autodiff::GridShape;
use serde::{Deserialize, Serialize};

use crate::error::{EpnError, Result};
use crate::geometry::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// (rows, cols) of the kernel.
    pub kernel: (usize, usize),
    pub channels: usize,
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub th: usize,
    pub tf: usize,
    pub grid: GridSpec,
    pub position_embedding: usize,
    pub velocity_embedding: usize,
    pub acceleration_embedding: usize,
    pub plan_embedding: usize,
    /// Hidden width of every history/plan encoder LSTM.
    pub encoder_hidden: usize,
    /// Width of a fused per-vehicle vector (one social-tensor cell).
    pub fused_width: usize,
    pub dynamic_width: usize,
    pub conv1: ConvSpec,
    pub pool1: (usize, usize),
    pub conv2: ConvSpec,
    pub pool2: (usize, usize),
    pub endpoint_feature: usize,
    pub latent_width: usize,
    /// Hidden layer widths of the endpoint/latent MLPs.
    pub mlp_hidden: Vec<usize>,
    pub decoder_hidden: usize,
    /// Standard deviation of the widened inference prior.
    pub sigma_t: f64,
    pub leaky_slope: f64,
    /// Divisor applied to history positions and velocities before embedding.
    pub history_scale: f64,
    pub velocity_scale: f64,
    pub acceleration_scale: f64,
    /// Meters per unit, (lateral, longitudinal), for plan inputs and endpoint inputs/outputs.
    pub future_scale: [f64; 2],
    /// Meters per unit of the per-step displacement head.
    pub displacement_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            th: 15,
            tf: 25,
            grid: GridSpec::default(),
            position_embedding: 32,
            velocity_embedding: 16,
            acceleration_embedding: 16,
            plan_embedding: 32,
            encoder_hidden: 64,
            fused_width: 32,
            dynamic_width: 32,
            conv1: ConvSpec { kernel: (3, 3), channels: 64 },
            pool1: (2, 1),
            conv2: ConvSpec { kernel: (3, 1), channels: 16 },
            pool2: (2, 1),
            endpoint_feature: 16,
            latent_width: 16,
            mlp_hidden: vec![64, 64],
            decoder_hidden: 128,
            sigma_t: 1.3,
            leaky_slope: 0.1,
            history_scale: 10.0,
            velocity_scale: 10.0,
            acceleration_scale: 1.0,
            future_scale: [5.0, 50.0],
            displacement_scale: 5.0,
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks: 5×3 grid, widths 4/4/4, hidden 8.
    pub fn tiny() -> Self {
        Self {
            th: 4,
            tf: 3,
            grid: GridSpec { length: 25.0, width: 10.5, rows: 5, cols: 3 },
            position_embedding: 4,
            velocity_embedding: 4,
            acceleration_embedding: 4,
            plan_embedding: 4,
            encoder_hidden: 8,
            fused_width: 4,
            dynamic_width: 4,
            conv1: ConvSpec { kernel: (3, 3), channels: 4 },
            pool1: (2, 1),
            conv2: ConvSpec { kernel: (1, 1), channels: 3 },
            pool2: (1, 1),
            endpoint_feature: 4,
            latent_width: 3,
            mlp_hidden: vec![6],
            decoder_hidden: 8,
            ..Self::default()
        }
    }

    /// Shapes after each pooling stage: (after conv1, after pool1, after conv2, after pool2 per stream).
    pub fn pooling_shapes(&self) -> Result<[GridShape; 4]> {
        let bad = |what: &str| EpnError::Config(format!("conv/pool geometry invalid for {}x{} grid: {what}", self.grid.rows, self.grid.cols));
        let input = GridShape::new(self.grid.rows, self.grid.cols, self.fused_width);
        let conv = |s: GridShape, c: ConvSpec| {
            (s.height >= c.kernel.0 && s.width >= c.kernel.1 && c.kernel.0 > 0 && c.kernel.1 > 0)
                .then(|| GridShape::new(s.height - c.kernel.0 + 1, s.width - c.kernel.1 + 1, c.channels))
        };
        let pool = |s: GridShape, p: (usize, usize)| {
            (p.0 > 0 && p.1 > 0 && s.height >= p.0 && s.width >= p.1).then(|| GridShape::new(s.height / p.0, s.width / p.1, s.channels))
        };
        let c1 = conv(input, self.conv1).ok_or_else(|| bad("conv1"))?;
        let p1 = pool(c1, self.pool1).ok_or_else(|| bad("pool1"))?;
        let c2 = conv(p1, self.conv2).ok_or_else(|| bad("conv2"))?;
        let p2 = pool(c2, self.pool2).ok_or_else(|| bad("pool2"))?;
        Ok([c1, p1, c2, p2])
    }

    /// Length of the flattened social feature (both streams).
    pub fn social_width(&self) -> Result<usize> {
        Ok(2 * self.pooling_shapes()?[3].len())
    }

    pub fn environment_width(&self) -> Result<usize> {
        Ok(self.social_width()? + self.dynamic_width)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let widths = [
            self.th,
            self.tf,
            self.position_embedding,
            self.velocity_embedding,
            self.acceleration_embedding,
            self.plan_embedding,
            self.encoder_hidden,
            self.fused_width,
            self.dynamic_width,
            self.endpoint_feature,
            self.latent_width,
            self.decoder_hidden,
        ];
        if widths.contains(&0) || self.mlp_hidden.contains(&0) {
            return Err(EpnError::Config("all widths and horizons must be positive".into()));
        }
        if !(self.sigma_t > 0.0) {
            return Err(EpnError::Config(format!("sigma_t must be positive, got {}", self.sigma_t)));
        }
        for (name, s) in [
            ("history_scale", self.history_scale),
            ("velocity_scale", self.velocity_scale),
            ("acceleration_scale", self.acceleration_scale),
            ("future_scale.lateral", self.future_scale[0]),
            ("future_scale.longitudinal", self.future_scale[1]),
            ("displacement_scale", self.displacement_scale),
        ] {
            if !(s > 0.0) {
                return Err(EpnError::Config(format!("{name} must be positive")));
            }
        }
        self.pooling_shapes()?;
        Ok(())
    }
}

/// Pathway switches for ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub use_plan: bool,
    pub use_velocity: bool,
    pub use_acceleration: bool,
    pub use_refinement: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { use_plan: true, use_velocity: true, use_acceleration: true, use_refinement: true }
    }
}
