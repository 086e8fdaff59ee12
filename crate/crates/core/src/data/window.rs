use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::track::VehicleTrack;
use crate::error::{EpnError, Result};
use crate::geometry::GridSpec;

pub const HISTORY_STEPS: usize = 15;
pub const FUTURE_STEPS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
}

impl State {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentHistory {
    pub vehicle_id: i64,
    /// Oldest first; the last entry is `t_now`.
    pub states: Vec<State>,
}

/// One prediction instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneWindow {
    pub window_id: u64,
    pub target_id: i64,
    pub ego_id: i64,
    /// Index of the present frame within the target's (resampled) track.
    pub t_now: usize,
    pub timestamp: f64,
    pub target: AgentHistory,
    /// Every other vehicle with full history coverage inside the target's
    /// grid at `t_now`, sorted by id; includes the ego.
    pub neighbors: Vec<AgentHistory>,
    pub future: Vec<State>,
    pub ego_plan: Vec<[f64; 2]>,
}

impl SceneWindow {
    pub fn target_position(&self) -> [f64; 2] {
        self.target.states.last().map(State::position).unwrap_or([0.0, 0.0])
    }

    pub fn ego(&self) -> Option<&AgentHistory> {
        self.neighbors.iter().find(|n| n.vehicle_id == self.ego_id)
    }

    /// Endpoint of the ground-truth future.
    pub fn endpoint(&self) -> [f64; 2] {
        self.future.last().map(State::position).unwrap_or([0.0, 0.0])
    }

    pub fn validate(&self, th: usize, tf: usize) -> Result<()> {
        let shape = |what: &str, got: usize, want: usize| {
            Err(EpnError::Shape(format!("window {}: {what} has {got} steps, expected {want}", self.window_id)))
        };
        if self.target.states.len() != th {
            return shape("target history", self.target.states.len(), th);
        }
        if let Some(n) = self.neighbors.iter().find(|n| n.states.len() != th) {
            return shape(&format!("history of vehicle {}", n.vehicle_id), n.states.len(), th);
        }
        if self.future.len() != tf {
            return shape("future", self.future.len(), tf);
        }
        if self.ego_plan.len() != tf {
            return shape("ego plan", self.ego_plan.len(), tf);
        }
        if self.ego().is_none() {
            return Err(EpnError::Consistency(format!("window {}: ego {} missing from neighbors", self.window_id, self.ego_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub th: usize,
    pub tf: usize,
    /// Spacing between consecutive `t_now` values of one target, in frames.
    pub stride: usize,
    pub hz: f64,
    pub grid: GridSpec,
    /// Restricts which vehicles may act as targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeSet<i64>>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { th: HISTORY_STEPS, tf: FUTURE_STEPS, stride: 5, hz: 5.0, grid: GridSpec::default(), targets: None }
    }
}

struct Indexed<'a> {
    track: &'a VehicleTrack,
    keys: Vec<i64>,
    by_key: HashMap<i64, usize>,
}

impl Indexed<'_> {
    /// Frame index range covering keys `from..=to`, if fully present.
    fn covers(&self, from: i64, to: i64) -> Option<usize> {
        let start = *self.by_key.get(&from)?;
        let end = *self.by_key.get(&to)?;
        (end >= start && (end - start) as i64 == to - from).then_some(start)
    }
}

/// Cuts fixed-length windows; output sorted by `(target_id, t_now)`, with
/// `window_id` numbering that order.
pub fn window_scenes(tracks: &[VehicleTrack], cfg: &WindowConfig) -> Vec<SceneWindow> {
    let (th, tf) = (cfg.th as i64, cfg.tf as i64);
    let key = |t: f64| (t * cfg.hz).round() as i64;
    let indexed: Vec<Indexed> = tracks
        .iter()
        .map(|track| {
            let keys: Vec<i64> = track.frames.iter().map(|f| key(f.timestamp)).collect();
            let by_key = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
            Indexed { track, keys, by_key }
        })
        .collect();
    let mut present: HashMap<i64, Vec<usize>> = HashMap::new();
    for (ti, ix) in indexed.iter().enumerate() {
        for &k in &ix.keys {
            present.entry(k).or_default().push(ti);
        }
    }

    let mut order: Vec<usize> = (0..indexed.len()).collect();
    order.sort_by_key(|&i| indexed[i].track.vehicle_id);

    let mut out = Vec::new();
    for &ti in &order {
        let target = &indexed[ti];
        if cfg.targets.as_ref().is_some_and(|s| !s.contains(&target.track.vehicle_id)) {
            continue;
        }
        let n = target.track.frames.len() as i64;
        let mut i = th - 1;
        while i + tf < n {
            let k_now = target.keys[i as usize];
            if target.covers(k_now - th + 1, k_now + tf) == Some((i - th + 1) as usize) {
                if let Some(w) = build_window(&indexed, &present, ti, i as usize, k_now, cfg) {
                    out.push(w);
                }
            }
            i += cfg.stride.max(1) as i64;
        }
    }
    for (id, w) in out.iter_mut().enumerate() {
        w.window_id = id as u64;
    }
    out
}

fn build_window(
    indexed: &[Indexed],
    present: &HashMap<i64, Vec<usize>>,
    ti: usize,
    i_now: usize,
    k_now: i64,
    cfg: &WindowConfig,
) -> Option<SceneWindow> {
    let (th, tf) = (cfg.th, cfg.tf);
    let target = &indexed[ti];
    let tframes = &target.track.frames;
    let now = tframes[i_now];
    let to_state = |f: &super::track::Frame| State { x: f.x, y: f.y, v: f.v, a: f.a };

    struct Cand {
        idx: usize,
        start: usize,
        dx: f64,
        dy: f64,
        full: bool,
        same_lane: bool,
    }
    let mut cands = Vec::new();
    for &oi in present.get(&k_now)? {
        if oi == ti {
            continue;
        }
        let other = &indexed[oi];
        let Some(start) = other.covers(k_now - th as i64 + 1, k_now) else { continue };
        let f = other.track.frames[start + th - 1];
        let (dx, dy) = (f.x - now.x, f.y - now.y);
        if !cfg.grid.contains(dx, dy) {
            continue;
        }
        let full = other.covers(k_now - th as i64 + 1, k_now + tf as i64).is_some();
        let same_lane = match (f.lane_id, now.lane_id) {
            (Some(a), Some(b)) => a == b,
            _ => dx.abs() < cfg.grid.cell_width() / 2.0,
        };
        cands.push(Cand { idx: oi, start, dx, dy, full, same_lane });
    }

    let id_of = |c: &Cand| indexed[c.idx].track.vehicle_id;
    let follower = cands
        .iter()
        .filter(|c| c.full && c.same_lane && c.dy < 0.0)
        .min_by(|a, b| (-a.dy, id_of(a)).partial_cmp(&(-b.dy, id_of(b))).expect("finite"));
    let ego = follower.or_else(|| {
        cands
            .iter()
            .filter(|c| c.full)
            .min_by(|a, b| (a.dx.hypot(a.dy), id_of(a)).partial_cmp(&(b.dx.hypot(b.dy), id_of(b))).expect("finite"))
    })?;

    let ego_track = indexed[ego.idx].track;
    let ego_plan = ego_track.frames[ego.start + th..ego.start + th + tf].iter().map(|f| [f.x, f.y]).collect();

    let mut neighbors: Vec<AgentHistory> = cands
        .iter()
        .map(|c| {
            let tr = indexed[c.idx].track;
            AgentHistory { vehicle_id: tr.vehicle_id, states: tr.frames[c.start..c.start + th].iter().map(to_state).collect() }
        })
        .collect();
    neighbors.sort_by_key(|n| n.vehicle_id);

    Some(SceneWindow {
        window_id: 0,
        target_id: target.track.vehicle_id,
        ego_id: ego_track.vehicle_id,
        t_now: i_now,
        timestamp: now.timestamp,
        target: AgentHistory {
            vehicle_id: target.track.vehicle_id,
            states: tframes[i_now + 1 - th..=i_now].iter().map(to_state).collect(),
        },
        neighbors,
        future: tframes[i_now + 1..=i_now + tf].iter().map(to_state).collect(),
        ego_plan,
    })
}
