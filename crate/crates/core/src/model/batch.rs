use epn_autodiff::{Matrix, Real};

use super::config::ModelConfig;
use crate::data::{SceneWindow, State};
use crate::error::{EpnError, Result};
use crate::geometry::{build_occupancy_mask, ego_cell, to_target_frame};

/// Model-ready tensors for a set of windows, all in the target frame.
///
/// Vehicle rows hold every target followed by the neighbors that won a grid
/// cell; losers of a cell collision are never encoded.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub size: usize,
    pub vehicles: usize,
    /// One `vehicles × 2` matrix per history step, scaled.
    pub positions: Vec<Matrix<T>>,
    pub velocities: Vec<Matrix<T>>,
    pub accelerations: Vec<Matrix<T>>,
    pub target_rows: Vec<usize>,
    /// Per window: `(flat cell, vehicle row)` of each resolved neighbor.
    pub neighbor_cells: Vec<Vec<(usize, usize)>>,
    pub ego_cells: Vec<Option<usize>>,
    /// One `size × 2` matrix per future step, scaled.
    pub plan: Vec<Matrix<T>>,
    /// Framed future positions in meters, `size × 2 tf`, laid out x1 y1 x2 y2 ...
    pub future: Matrix<T>,
    /// Framed ground-truth endpoints in meters.
    pub endpoint: Matrix<T>,
    /// Absolute target position at `t_now`.
    pub origins: Vec<[f64; 2]>,
    pub window_ids: Vec<u64>,
}

impl<T: Real> Batch<T> {
    /// Frames and validates every window. With `require_ego`, a window whose
    /// ego is outside the grid is a placement error.
    pub fn new(windows: &[&SceneWindow], config: &ModelConfig, require_ego: bool) -> Result<Self> {
        if windows.is_empty() {
            return Err(EpnError::Argument("empty batch".into()));
        }
        let (th, tf) = (config.th, config.tf);
        let grid = &config.grid;
        let mut histories: Vec<Vec<State>> = Vec::new();
        let mut target_rows = Vec::with_capacity(windows.len());
        let mut neighbor_cells = Vec::with_capacity(windows.len());
        let mut ego_cells = Vec::with_capacity(windows.len());
        let mut plan_raw = Vec::with_capacity(windows.len());
        let mut future = Vec::with_capacity(windows.len() * 2 * tf);
        let mut endpoint = Vec::with_capacity(windows.len() * 2);
        let mut origins = Vec::with_capacity(windows.len());

        for w in windows {
            w.validate(th, tf)?;
            let framed = to_target_frame(w);
            origins.push(w.target_position());
            target_rows.push(histories.len());
            histories.push(framed.target.states.clone());
            let mut cells = Vec::new();
            for a in build_occupancy_mask(&framed, grid).resolved() {
                cells.push((grid.flat(a.cell), histories.len()));
                histories.push(framed.neighbors[a.neighbor_index].states.clone());
            }
            neighbor_cells.push(cells);
            let ego = ego_cell(&framed, grid).map(|c| grid.flat(c));
            if require_ego && ego.is_none() {
                return Err(EpnError::Placement(format!("window {}: ego {} is outside the pooling grid", w.window_id, w.ego_id)));
            }
            ego_cells.push(ego);
            plan_raw.push(framed.ego_plan.clone());
            for s in &framed.future {
                future.extend([T::of(s.x), T::of(s.y)]);
            }
            let e = framed.endpoint();
            endpoint.extend([T::of(e[0]), T::of(e[1])]);
        }

        let n = histories.len();
        let hs = 1.0 / config.history_scale;
        let vs = 1.0 / config.velocity_scale;
        let as_ = 1.0 / config.acceleration_scale;
        let fs = config.future_scale;
        let positions = (0..th)
            .map(|t| Matrix::from_fn(n, 2, |r, c| T::of(if c == 0 { histories[r][t].x } else { histories[r][t].y } * hs)))
            .collect();
        let velocities = (0..th).map(|t| Matrix::from_fn(n, 1, |r, _| T::of(histories[r][t].v * vs))).collect();
        let accelerations = (0..th).map(|t| Matrix::from_fn(n, 1, |r, _| T::of(histories[r][t].a * as_))).collect();
        let b = windows.len();
        let plan = (0..tf).map(|t| Matrix::from_fn(b, 2, |r, c| T::of(plan_raw[r][t][c] / fs[c]))).collect();

        Ok(Self {
            size: b,
            vehicles: n,
            positions,
            velocities,
            accelerations,
            target_rows,
            neighbor_cells,
            ego_cells,
            plan,
            future: Matrix::from_vec(b, 2 * tf, future),
            endpoint: Matrix::from_vec(b, 2, endpoint),
            origins,
            window_ids: windows.iter().map(|w| w.window_id).collect(),
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::AgentHistory;

    pub(crate) fn straight_window(id: u64, ox: f64, oy: f64) -> SceneWindow {
        let st = |x: f64, y: f64| State { x, y, v: 20.0, a: 0.0 };
        let track = |x: f64, y0: f64| (0..15).map(|t| st(ox + x, oy + y0 + 4.0 * t as f64)).collect::<Vec<_>>();
        SceneWindow {
            window_id: id,
            target_id: 1,
            ego_id: 2,
            t_now: 14,
            timestamp: 0.0,
            target: AgentHistory { vehicle_id: 1, states: track(0.0, -56.0) },
            neighbors: vec![
                AgentHistory { vehicle_id: 2, states: track(0.0, -66.0) },
                AgentHistory { vehicle_id: 3, states: track(3.6, -50.0) },
            ],
            future: (1..=25).map(|t| st(ox, oy + 4.0 * t as f64)).collect(),
            ego_plan: (1..=25).map(|t| [ox, oy - 10.0 + 4.0 * t as f64]).collect(),
        }
    }

    #[test]
    fn rows_and_cells() {
        let w = straight_window(0, 100.0, 500.0);
        let b = Batch::<f64>::new(&[&w, &w], &ModelConfig::default(), true).unwrap();
        assert_eq!(b.vehicles, 6);
        assert_eq!(b.target_rows, vec![0, 3]);
        assert_eq!(b.neighbor_cells[1].iter().map(|c| c.1).collect::<Vec<_>>(), vec![4, 5]);
        // ego 10 m behind in the same column: row 4 (cells are 4.69 m long), col 1
        assert_eq!(b.ego_cells[0], Some(4 * 3 + 1));
        assert_eq!(b.positions[14].row(0), &[0.0, 0.0]);
        assert!((b.endpoint[(0, 1)] - 100.0).abs() < 1e-9);
        assert!((b.plan[0][(0, 1)] - (-6.0 / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn wrong_history_length_is_shape_error() {
        let mut w = straight_window(0, 0.0, 0.0);
        w.target.states.pop();
        assert!(matches!(Batch::<f64>::new(&[&w], &ModelConfig::default(), true), Err(EpnError::Shape(_))));
    }
}
