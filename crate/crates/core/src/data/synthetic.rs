//! Synthetic multi-lane highway scenes.
//!
//! Lanes are numbered from the lowest lateral coordinate; lane `l` is centred
//! at `(l + 0.5) * lane_width`. A "left" change moves to lane `l + 1`. Lane
//! changes follow a quintic smoothstep over `lane_change_duration`; a change
//! that would leave the road is replaced by lane keeping. Longitudinal motion
//! is constant speed until the maneuver start time, then constant
//! acceleration (speed clamped at zero). Scenes never share timestamps, so
//! vehicles of different scenes never interact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::track::{Frame, VehicleTrack};
use crate::error::{EpnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeuverMix {
    pub keep: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Maneuver {
    Keep,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_scenes: usize,
    pub num_lanes: usize,
    pub lane_width: f64,
    pub vehicles_per_scene: usize,
    pub speed_range: (f64, f64),
    /// Longitudinal spacing between consecutive vehicles in a lane.
    pub gap_range: (f64, f64),
    pub maneuver_mix: ManeuverMix,
    /// Seconds after scene start at which lane changes and accelerations begin.
    pub maneuver_start: (f64, f64),
    pub lane_change_duration: f64,
    pub accel_range: (f64, f64),
    /// All vehicles starting in one lane share one acceleration draw.
    pub lane_coupled_accel: bool,
    /// Lanes vehicles may start in (all lanes when `None`).
    pub spawn_lanes: Option<Vec<usize>>,
    /// Standard deviation of Gaussian position noise, meters.
    pub noise_scale: f64,
    /// Scene length in seconds.
    pub duration: f64,
    pub hz: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_scenes: 100,
            num_lanes: 3,
            lane_width: 3.6,
            vehicles_per_scene: 6,
            speed_range: (22.0, 30.0),
            gap_range: (12.0, 25.0),
            maneuver_mix: ManeuverMix { keep: 0.5, left: 0.25, right: 0.25 },
            maneuver_start: (0.0, 7.0),
            lane_change_duration: 4.0,
            accel_range: (-1.0, 1.0),
            lane_coupled_accel: false,
            spawn_lanes: None,
            noise_scale: 0.0,
            duration: 8.0,
            hz: 5.0,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.maneuver_mix;
        let bad = |msg: String| Err(EpnError::Config(msg));
        if [m.keep, m.left, m.right].iter().any(|&p| !(p >= 0.0)) || ((m.keep + m.left + m.right) - 1.0).abs() > 1e-9 {
            return bad(format!("maneuver probabilities must be non-negative and sum to 1, got {m:?}"));
        }
        if self.num_lanes == 0 || !(self.lane_width > 0.0) {
            return bad("need at least one lane of positive width".into());
        }
        if let Some(l) = &self.spawn_lanes {
            if l.is_empty() || l.iter().any(|&x| x >= self.num_lanes) {
                return bad(format!("spawn lanes {l:?} invalid for {} lanes", self.num_lanes));
            }
        }
        for (name, (lo, hi)) in [
            ("speed_range", self.speed_range),
            ("gap_range", self.gap_range),
            ("maneuver_start", self.maneuver_start),
            ("accel_range", self.accel_range),
        ] {
            if !(lo <= hi) {
                return bad(format!("{name} is empty: ({lo}, {hi})"));
            }
        }
        if self.speed_range.0 < 0.0 {
            return bad("speeds must be non-negative".into());
        }
        if !(self.hz > 0.0 && self.duration > 0.0 && self.lane_change_duration > 0.0 && self.noise_scale >= 0.0) {
            return bad("rates, durations and noise must be positive".into());
        }
        Ok(())
    }

    /// Two lanes, everyone starts in the right one at one speed; half the
    /// vehicles change lane just after the present step, so futures split in
    /// two from indistinguishable histories.
    pub fn multimodal(num_scenes: usize, seed: u64) -> Self {
        Self {
            num_scenes,
            num_lanes: 2,
            spawn_lanes: Some(vec![0]),
            speed_range: (25.0, 25.0),
            maneuver_mix: ManeuverMix { keep: 0.5, left: 0.5, right: 0.0 },
            maneuver_start: (2.8, 3.2),
            accel_range: (0.0, 0.0),
            seed,
            ..Self::default()
        }
    }

    /// Lane keeping only; each lane brakes or accelerates together just
    /// after the present step, so the follower's plan reveals the target's future.
    pub fn plan_coupled(num_scenes: usize, seed: u64) -> Self {
        Self {
            num_scenes,
            maneuver_mix: ManeuverMix { keep: 1.0, left: 0.0, right: 0.0 },
            maneuver_start: (2.8, 3.2),
            accel_range: (-2.5, 2.5),
            lane_coupled_accel: true,
            seed,
            ..Self::default()
        }
    }

    /// Lane changes both ways and accelerations starting at any time.
    pub fn maneuver_rich(num_scenes: usize, seed: u64) -> Self {
        Self { num_scenes, accel_range: (-2.0, 2.0), seed, ..Self::default() }
    }

    pub fn frames_per_scene(&self) -> usize {
        (self.duration * self.hz).round() as usize
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Deterministic under `config.seed`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<VehicleTrack>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_scale.max(f64::MIN_POSITIVE)).expect("valid normal");
    let n = config.frames_per_scene();
    let dt = 1.0 / config.hz;
    let lanes: Vec<usize> = config.spawn_lanes.clone().unwrap_or_else(|| (0..config.num_lanes).collect());
    let mut tracks = Vec::with_capacity(config.num_scenes * config.vehicles_per_scene);

    for scene in 0..config.num_scenes {
        let frame_offset = scene * (n + 50);
        let lane_accel: Vec<f64> = (0..config.num_lanes).map(|_| draw(&mut rng, config.accel_range)).collect();
        let mut lane_head: Vec<f64> = (0..config.num_lanes).map(|_| draw(&mut rng, (0.0, config.gap_range.1))).collect();

        for k in 0..config.vehicles_per_scene {
            let lane = lanes[rng.random_range(0..lanes.len())];
            let y0 = lane_head[lane];
            lane_head[lane] += draw(&mut rng, config.gap_range);
            let v0 = draw(&mut rng, config.speed_range);
            let u: f64 = rng.random();
            let m = config.maneuver_mix;
            let maneuver = if u < m.keep {
                Maneuver::Keep
            } else if u < m.keep + m.left {
                Maneuver::Left
            } else {
                Maneuver::Right
            };
            let dir: i64 = match maneuver {
                Maneuver::Left if lane + 1 < config.num_lanes => 1,
                Maneuver::Right if lane > 0 => -1,
                _ => 0,
            };
            let start = draw(&mut rng, config.maneuver_start);
            let own_accel = draw(&mut rng, config.accel_range);
            let accel = if config.lane_coupled_accel { lane_accel[lane] } else { own_accel };

            let centre = (lane as f64 + 0.5) * config.lane_width;
            let mut clean = Vec::with_capacity(n);
            let (mut y, mut speed) = (y0, v0);
            for i in 0..n {
                if i > 0 {
                    let t_prev = (i - 1) as f64 * dt;
                    let a = if t_prev >= start { accel } else { 0.0 };
                    let next = (speed + a * dt).max(0.0);
                    y += (speed + next) / 2.0 * dt;
                    speed = next;
                }
                let t = i as f64 * dt;
                let progress = if dir == 0 { 0.0 } else { smoothstep((t - start) / config.lane_change_duration) };
                let x = centre + dir as f64 * config.lane_width * progress;
                let lane_id = lane as i64 + if progress >= 0.5 { dir } else { 0 };
                clean.push((t, x, y, lane_id));
            }

            let mut frames: Vec<Frame> = Vec::with_capacity(n);
            for i in 0..n {
                let (_, x, y, lane_id) = clean[i];
                let v = if i == 0 { v0 } else { (x - clean[i - 1].1).hypot(y - clean[i - 1].2) / dt };
                let (nx, ny) = if config.noise_scale > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
                frames.push(Frame {
                    timestamp: (frame_offset + i) as f64 / config.hz,
                    x: x + nx,
                    y: y + ny,
                    v,
                    a: 0.0,
                    lane_id: Some(lane_id),
                });
            }
            for i in 1..n {
                frames[i].a = (frames[i].v - frames[i - 1].v) / dt;
            }
            if n > 1 {
                frames[0].a = frames[1].a;
            }
            tracks.push(VehicleTrack::new((scene * config.vehicles_per_scene + k + 1) as i64, frames));
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_only_mix_stays_in_lane() {
        let cfg = SyntheticConfig {
            maneuver_mix: ManeuverMix { keep: 1.0, left: 0.0, right: 0.0 },
            noise_scale: 0.05,
            num_scenes: 10,
            ..Default::default()
        };
        for t in generate_synthetic(&cfg).unwrap() {
            let x0 = t.frames[0].x;
            assert!(t.frames.iter().all(|f| (f.x - x0).abs() < 0.5));
        }
    }

    #[test]
    fn constant_speed_steps() {
        let cfg = SyntheticConfig {
            speed_range: (24.0, 24.0),
            accel_range: (0.0, 0.0),
            maneuver_mix: ManeuverMix { keep: 1.0, left: 0.0, right: 0.0 },
            num_scenes: 3,
            ..Default::default()
        };
        for t in generate_synthetic(&cfg).unwrap() {
            for w in t.frames.windows(2) {
                assert!((w[1].y - w[0].y - 24.0 * 0.2).abs() < 1e-9);
                assert!((w[1].v - 24.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let cfg = SyntheticConfig { noise_scale: 0.1, num_scenes: 5, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SyntheticConfig { seed: 7, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn tracks_respect_lane_bounds_and_validate() {
        let cfg = SyntheticConfig { maneuver_mix: ManeuverMix { keep: 0.0, left: 0.5, right: 0.5 }, num_scenes: 20, ..Default::default() };
        let road = cfg.num_lanes as f64 * cfg.lane_width;
        for t in generate_synthetic(&cfg).unwrap() {
            t.validate().unwrap();
            assert!(t.frames.iter().all(|f| f.x > 0.0 && f.x < road));
            assert!(t.frames.iter().all(|f| f.lane_id.unwrap() >= 0 && (f.lane_id.unwrap() as usize) < cfg.num_lanes));
        }
    }

    #[test]
    fn lane_change_completes_one_lane_width() {
        let cfg = SyntheticConfig {
            num_lanes: 2,
            spawn_lanes: Some(vec![0]),
            maneuver_mix: ManeuverMix { keep: 0.0, left: 1.0, right: 0.0 },
            maneuver_start: (1.0, 1.0),
            num_scenes: 1,
            ..Default::default()
        };
        for t in generate_synthetic(&cfg).unwrap() {
            let dx = t.frames.last().unwrap().x - t.frames[0].x;
            assert!((dx - 3.6).abs() < 1e-9);
            assert_eq!(t.frames.last().unwrap().lane_id, Some(1));
        }
    }

    #[test]
    fn bad_mix_rejected() {
        let cfg = SyntheticConfig { maneuver_mix: ManeuverMix { keep: 0.5, left: 0.2, right: 0.2 }, ..Default::default() };
        assert!(matches!(generate_synthetic(&cfg), Err(EpnError::Config(_))));
    }
}
