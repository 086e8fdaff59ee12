//! Target-centred framing, occupancy grids and social tensors.
//!
//! Grid rows run along the road (row 0 is the rearmost band), columns across
//! it (column 0 is the lowest lateral coordinate). Cells are half-open, so a
//! vehicle exactly on the far edge of the grid falls outside it.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::parse::FEET_TO_METERS;
use crate::data::window::SceneWindow;
use crate::error::{EpnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Longitudinal extent in meters.
    pub length: f64,
    /// Lateral extent in meters.
    pub width: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { length: 200.0 * FEET_TO_METERS, width: 35.0 * FEET_TO_METERS, rows: 13, cols: 3 }
    }
}

impl GridSpec {
    pub fn cell_length(&self) -> f64 {
        self.length / self.rows as f64
    }

    pub fn cell_width(&self) -> f64 {
        self.width / self.cols as f64
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || !(self.length > 0.0) || !(self.width > 0.0) {
            return Err(EpnError::Config(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }

    /// Cell of a target-framed point, `None` outside `[-L/2, L/2) × [-W/2, W/2)`.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let half_l = self.length / 2.0;
        let half_w = self.width / 2.0;
        if !(y >= -half_l && y < half_l && x >= -half_w && x < half_w) {
            return None;
        }
        let i = ((y + half_l) / self.cell_length()).floor() as usize;
        let j = ((x + half_w) / self.cell_width()).floor() as usize;
        (i < self.rows && j < self.cols).then_some((i, j))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some()
    }

    pub fn flat(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.cols + cell.1
    }
}

/// Re-expresses every position in the window relative to the target's
/// position at `t_now`.
pub fn to_target_frame(window: &SceneWindow) -> SceneWindow {
    let [ox, oy] = window.target_position();
    let mut out = window.clone();
    let shift = |s: &mut crate::data::window::State| {
        s.x -= ox;
        s.y -= oy;
    };
    out.target.states.iter_mut().for_each(shift);
    for n in &mut out.neighbors {
        n.states.iter_mut().for_each(shift);
    }
    out.future.iter_mut().for_each(shift);
    for p in &mut out.ego_plan {
        p[0] -= ox;
        p[1] -= oy;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyMask {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<u8>,
}

impl OccupancyMask {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.cols + j]
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }
}

/// A non-target vehicle placed in the grid at `t_now`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellAssignment {
    pub vehicle_id: i64,
    /// Index into `SceneWindow::neighbors`.
    pub neighbor_index: usize,
    pub cell: (usize, usize),
    /// Euclidean distance to the target at `t_now`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    pub mask: OccupancyMask,
    /// Every in-grid vehicle, in neighbor order (collisions included).
    pub assignments: Vec<CellAssignment>,
}

impl Occupancy {
    /// One vehicle per occupied cell: the nearest to the target, ties going
    /// to the lower vehicle id. Sorted by cell.
    pub fn resolved(&self) -> Vec<CellAssignment> {
        let mut best: HashMap<(usize, usize), CellAssignment> = HashMap::new();
        for a in &self.assignments {
            best.entry(a.cell)
                .and_modify(|cur| {
                    if (a.distance, a.vehicle_id) < (cur.distance, cur.vehicle_id) {
                        *cur = *a;
                    }
                })
                .or_insert(*a);
        }
        let mut out: Vec<_> = best.into_values().collect();
        out.sort_by_key(|a| a.cell);
        out
    }

    /// Plain-text listing, one `row col vehicle_id distance` line per assignment.
    pub fn listing(&self) -> String {
        let winners: Vec<i64> = self.resolved().iter().map(|a| a.vehicle_id).collect();
        let mut s = String::from("# row col vehicle_id distance_m kept\n");
        for a in &self.assignments {
            let kept = winners.contains(&a.vehicle_id);
            let _ = writeln!(s, "{} {} {} {:.3} {}", a.cell.0, a.cell.1, a.vehicle_id, a.distance, kept);
        }
        s
    }
}

/// Occupancy of a framed window (positions relative to the target).
pub fn build_occupancy_mask(window: &SceneWindow, spec: &GridSpec) -> Occupancy {
    let mut cells = vec![0u8; spec.num_cells()];
    let mut assignments = Vec::new();
    for (k, n) in window.neighbors.iter().enumerate() {
        let Some(s) = n.states.last() else { continue };
        if let Some(cell) = spec.cell_of(s.x, s.y) {
            cells[spec.flat(cell)] = 1;
            assignments.push(CellAssignment {
                vehicle_id: n.vehicle_id,
                neighbor_index: k,
                cell,
                distance: (s.x * s.x + s.y * s.y).sqrt(),
            });
        }
    }
    Occupancy { mask: OccupancyMask { rows: spec.rows, cols: spec.cols, cells }, assignments }
}

/// `rows × cols × depth` feature grid, channels last.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialTensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default + PartialEq> SocialTensor<T> {
    pub fn zeros(rows: usize, cols: usize, depth: usize) -> Self {
        Self { rows, cols, depth, data: vec![T::default(); rows * cols * depth] }
    }

    pub fn cell(&self, i: usize, j: usize) -> &[T] {
        let start = (i * self.cols + j) * self.depth;
        &self.data[start..start + self.depth]
    }

    fn cell_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let start = (i * self.cols + j) * self.depth;
        &mut self.data[start..start + self.depth]
    }

    pub fn nonzero_cells(&self) -> Vec<(usize, usize)> {
        let zero = T::default();
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.cell(i, j).iter().any(|&v| v != zero) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Places each resolved neighbor's feature vector in its cell.
pub fn scatter_social_tensor<T: Copy + Default + PartialEq>(
    occupancy: &Occupancy,
    features: &HashMap<i64, Vec<T>>,
    depth: usize,
) -> Result<SocialTensor<T>> {
    let mut t = SocialTensor::zeros(occupancy.mask.rows, occupancy.mask.cols, depth);
    for a in occupancy.resolved() {
        let f = features
            .get(&a.vehicle_id)
            .ok_or_else(|| EpnError::Consistency(format!("no feature vector for vehicle {}", a.vehicle_id)))?;
        if f.len() != depth {
            return Err(EpnError::Shape(format!("feature for vehicle {} has width {}, expected {depth}", a.vehicle_id, f.len())));
        }
        t.cell_mut(a.cell.0, a.cell.1).copy_from_slice(f);
    }
    Ok(t)
}

/// Grid cell of the ego vehicle at `t_now` in a framed window.
pub fn ego_cell(window: &SceneWindow, spec: &GridSpec) -> Option<(usize, usize)> {
    let ego = window.neighbors.iter().find(|n| n.vehicle_id == window.ego_id)?;
    let s = ego.states.last()?;
    spec.cell_of(s.x, s.y)
}

/// Tensor that is zero except for the ego's cell, which holds the plan feature.
pub fn build_plan_tensor<T: Copy + Default + PartialEq>(
    plan_feature: &[T],
    ego_cell: Option<(usize, usize)>,
    spec: &GridSpec,
) -> Result<SocialTensor<T>> {
    let (i, j) = ego_cell.ok_or_else(|| EpnError::Placement("ego vehicle is outside the pooling grid".into()))?;
    if i >= spec.rows || j >= spec.cols {
        return Err(EpnError::Placement(format!("ego cell ({i},{j}) outside {}x{} grid", spec.rows, spec.cols)));
    }
    let mut t = SocialTensor::zeros(spec.rows, spec.cols, plan_feature.len());
    t.cell_mut(i, j).copy_from_slice(plan_feature);
    Ok(t)
}
