//! Best-of-k selection, horizon RMSE, ADE/FDE and a constant-velocity baseline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::SceneWindow;
use crate::error::{EpnError, Result};
use crate::predict::PredictionSet;

pub const METERS_TO_FEET: f64 = 1.0 / 0.3048;

/// Horizon labels and their 1-based steps at 5 Hz.
pub const HORIZONS: [(&str, usize); 5] = [("1s", 5), ("2s", 10), ("3s", 15), ("4s", 20), ("5s", 25)];

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean Euclidean error over all steps.
pub fn mean_error(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(EpnError::Shape(format!("trajectory has {} steps, truth {}", pred.len(), truth.len())));
    }
    Ok(pred.iter().zip(truth).map(|(&p, &t)| dist(p, t)).sum::<f64>() / pred.len() as f64)
}

/// Index of the hypothesis with the lowest mean displacement; ties go to the lowest index.
pub fn best_hypothesis(hypotheses: &[Vec<[f64; 2]>], truth: &[[f64; 2]]) -> Result<usize> {
    if hypotheses.is_empty() {
        return Err(EpnError::Argument("no hypotheses to choose from".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, h) in hypotheses.iter().enumerate() {
        let e = mean_error(h, truth)?;
        if e < best.1 {
            best = (i, e);
        }
    }
    Ok(best.0)
}

/// Best-of-k trajectory of a prediction set.
pub fn best_trajectory<'a>(set: &'a PredictionSet, truth: &[[f64; 2]]) -> Result<&'a [[f64; 2]]> {
    let i = best_hypothesis(&set.trajectories(), truth)?;
    Ok(&set.hypotheses[i].trajectory)
}

fn check_pairs(pairs: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)]) -> Result<usize> {
    let len = pairs.first().map(|p| p.1.len()).ok_or_else(|| EpnError::Argument("no trajectories to score".into()))?;
    for (p, t) in pairs {
        if p.len() != len || t.len() != len {
            return Err(EpnError::Shape(format!("trajectory lengths {} and {} differ from {len}", p.len(), t.len())));
        }
    }
    Ok(len)
}

/// RMSE of the Euclidean error at each 1-based step in `steps`.
pub fn rmse_at_steps(pairs: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)], steps: &[usize]) -> Result<Vec<f64>> {
    let len = check_pairs(pairs)?;
    steps
        .iter()
        .map(|&h| {
            if h == 0 || h > len {
                return Err(EpnError::Shape(format!("horizon step {h} outside 1..={len}")));
            }
            let sq = pairs.iter().map(|(p, t)| dist(p[h - 1], t[h - 1]).powi(2)).sum::<f64>();
            Ok((sq / pairs.len() as f64).sqrt())
        })
        .collect()
}

/// RMSE at 1 s .. 5 s; trajectories must have 25 steps.
pub fn rmse_at_horizons(pairs: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)]) -> Result<Vec<(String, f64)>> {
    let len = check_pairs(pairs)?;
    if len != HORIZONS[4].1 {
        return Err(EpnError::Shape(format!("horizon RMSE needs {}-step trajectories, got {len}", HORIZONS[4].1)));
    }
    let steps: Vec<usize> = HORIZONS.iter().map(|h| h.1).collect();
    let values = rmse_at_steps(pairs, &steps)?;
    Ok(HORIZONS.iter().zip(values).map(|(h, v)| (h.0.to_string(), v)).collect())
}

/// `(ADE, FDE)` over all pairs.
pub fn ade_fde(pairs: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)]) -> Result<(f64, f64)> {
    let len = check_pairs(pairs)?;
    let mut ade = 0.0;
    let mut fde = 0.0;
    for (p, t) in pairs {
        ade += mean_error(p, t)?;
        fde += dist(p[len - 1], t[len - 1]);
    }
    let n = pairs.len() as f64;
    Ok((ade / n, fde / n))
}

/// Extrapolates the last history velocity (position difference per step) for `tf` steps.
pub fn constant_velocity_baseline(window: &SceneWindow, tf: usize) -> Result<Vec<[f64; 2]>> {
    let s = &window.target.states;
    if s.len() < 2 {
        return Err(EpnError::Shape(format!("constant-velocity extrapolation needs 2 history steps, got {}", s.len())));
    }
    let last = s[s.len() - 1].position();
    let prev = s[s.len() - 2].position();
    let d = [last[0] - prev[0], last[1] - prev[1]];
    Ok((1..=tf).map(|k| [last[0] + k as f64 * d[0], last[1] + k as f64 * d[1]]).collect())
}

pub fn truth_of(window: &SceneWindow) -> Vec<[f64; 2]> {
    window.future.iter().map(|s| s.position()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `(label, value)` per horizon.
    pub rmse_at: Vec<(String, f64)>,
    pub ade: f64,
    pub fde: f64,
    pub k: usize,
    pub num_windows: usize,
    pub unit: String,
}

impl MetricReport {
    /// Scores best-of-k trajectories against the windows' futures. Horizon
    /// RMSE is filled when the futures are 25 steps long.
    pub fn from_predictions(sets: &[PredictionSet], windows: &[&SceneWindow]) -> Result<Self> {
        if sets.len() != windows.len() {
            return Err(EpnError::Shape(format!("{} prediction sets for {} windows", sets.len(), windows.len())));
        }
        let mut pairs = Vec::with_capacity(sets.len());
        for (s, w) in sets.iter().zip(windows) {
            if s.window_id != w.window_id {
                return Err(EpnError::Consistency(format!("prediction for window {} paired with window {}", s.window_id, w.window_id)));
            }
            let truth = truth_of(w);
            pairs.push((best_trajectory(s, &truth)?.to_vec(), truth));
        }
        let k = sets.first().map_or(0, |s| s.hypotheses.len());
        Self::from_pairs(&pairs, k)
    }

    pub fn from_pairs(pairs: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)], k: usize) -> Result<Self> {
        let len = check_pairs(pairs)?;
        let rmse_at = if len == HORIZONS[4].1 { rmse_at_horizons(pairs)? } else { Vec::new() };
        let (ade, fde) = ade_fde(pairs)?;
        Ok(Self { rmse_at, ade, fde, k, num_windows: pairs.len(), unit: "m".into() })
    }

    pub fn in_feet(&self) -> Self {
        let f = |v: f64| v * METERS_TO_FEET;
        Self {
            rmse_at: self.rmse_at.iter().map(|(h, v)| (h.clone(), f(*v))).collect(),
            ade: f(self.ade),
            fde: f(self.fde),
            unit: "ft".into(),
            ..self.clone()
        }
    }

    /// Horizon grid followed by ADE/FDE.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "best-of-{} over {} windows ({})", self.k, self.num_windows, self.unit);
        if !self.rmse_at.is_empty() {
            let _ = write!(s, "{:<8}", "horizon");
            for (h, _) in &self.rmse_at {
                let _ = write!(s, "{h:>9}");
            }
            let _ = write!(s, "\n{:<8}", "RMSE");
            for (_, v) in &self.rmse_at {
                let _ = write!(s, "{v:>9.3}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "ADE {:.3}  FDE {:.3}", self.ade, self.fde);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgentHistory, State};

    fn line(n: usize, dx: f64) -> Vec<[f64; 2]> {
        (1..=n).map(|i| [dx, i as f64]).collect()
    }

    #[test]
    fn best_hypothesis_cases() {
        let truth = line(25, 0.0);
        assert_eq!(best_hypothesis(&[line(25, 3.0)], &truth).unwrap(), 0);
        let hyps = vec![line(25, 2.0), line(25, 0.0), line(25, -1.0)];
        assert_eq!(best_hypothesis(&hyps, &truth).unwrap(), 1);
        let tie = vec![line(25, 1.0), line(25, -1.0)];
        assert_eq!(best_hypothesis(&tie, &truth).unwrap(), 0);
    }

    #[test]
    fn rmse_trivial_and_shape_error() {
        let truth = line(25, 0.0);
        let zero = rmse_at_horizons(&[(truth.clone(), truth.clone())]).unwrap();
        assert!(zero.iter().all(|(_, v)| *v == 0.0));
        let one = rmse_at_horizons(&[(line(25, 1.0), truth.clone()), (line(25, -1.0), truth.clone())]).unwrap();
        assert!(one.iter().all(|(_, v)| (*v - 1.0).abs() < 1e-15));
        assert_eq!(one.iter().map(|h| h.0.as_str()).collect::<Vec<_>>(), ["1s", "2s", "3s", "4s", "5s"]);
        assert!(matches!(rmse_at_horizons(&[(line(24, 0.0), line(25, 0.0))]), Err(EpnError::Shape(_))));
    }

    #[test]
    fn rmse_three_hand_windows() {
        // errors at step 5: 5, 0, 1; at later horizons 1, 2, 2
        let truth = line(25, 0.0);
        let mut a = line(25, 1.0);
        a[4] = [3.0, 5.0 + 4.0];
        let mut b = line(25, 2.0);
        b[4] = [0.0, 5.0];
        let mut c = line(25, 2.0);
        c[4] = [1.0, 5.0];
        let pairs = vec![(a, truth.clone()), (b, truth.clone()), (c, truth)];
        let r = rmse_at_horizons(&pairs).unwrap();
        assert!((r[0].1 - (26.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!((r[1].1 - 3.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ade_fde_cases() {
        let truth = line(25, 0.0);
        assert_eq!(ade_fde(&[(truth.clone(), truth.clone())]).unwrap(), (0.0, 0.0));
        let (a, f) = ade_fde(&[(line(25, 2.0), truth)]).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (f - 2.0).abs() < 1e-12);
    }

    fn window_with(history: Vec<[f64; 2]>, future: Vec<[f64; 2]>) -> SceneWindow {
        let st = |p: [f64; 2]| State { x: p[0], y: p[1], v: 0.0, a: 0.0 };
        SceneWindow {
            window_id: 0,
            target_id: 1,
            ego_id: 2,
            t_now: history.len() - 1,
            timestamp: 0.0,
            target: AgentHistory { vehicle_id: 1, states: history.into_iter().map(st).collect() },
            neighbors: vec![],
            future: future.into_iter().map(st).collect(),
            ego_plan: vec![],
        }
    }

    #[test]
    fn constant_velocity_cases() {
        let w = window_with(vec![[1.0, 2.0]; 15], vec![[1.0, 2.0]; 25]);
        assert!(constant_velocity_baseline(&w, 25).unwrap().iter().all(|p| *p == [1.0, 2.0]));
        let hist: Vec<[f64; 2]> = (0..15).map(|i| [0.5, 3.0 * i as f64]).collect();
        let fut: Vec<[f64; 2]> = (15..40).map(|i| [0.5, 3.0 * i as f64]).collect();
        let w = window_with(hist, fut.clone());
        let cv = constant_velocity_baseline(&w, 25).unwrap();
        assert!(mean_error(&cv, &fut).unwrap() < 1e-12);
        let short = window_with(vec![[0.0, 0.0]], vec![[0.0, 0.0]]);
        assert!(constant_velocity_baseline(&short, 25).is_err());
    }

    #[test]
    fn circular_arc_truth_gives_positive_error() {
        let r = 100.0;
        let pt = |k: f64| [r - r * (k * 0.04).cos(), r * (k * 0.04).sin()];
        let hist: Vec<[f64; 2]> = (-14..=0).map(|k| pt(k as f64)).collect();
        let fut: Vec<[f64; 2]> = (1..=25).map(|k| pt(k as f64)).collect();
        let w = window_with(hist, fut.clone());
        let cv = constant_velocity_baseline(&w, 25).unwrap();
        let (ade, _) = ade_fde(&[(cv.clone(), fut.clone())]).unwrap();
        assert!(ade > 0.0);
        // outward drift of a tangent line from the circle after k steps
        let expected_last = {
            let p0 = pt(0.0);
            let p1 = pt(-1.0);
            let d = [p0[0] - p1[0], p0[1] - p1[1]];
            let e = [p0[0] + 25.0 * d[0], p0[1] + 25.0 * d[1]];
            dist(e, pt(25.0))
        };
        assert!((dist(cv[24], fut[24]) - expected_last).abs() < 1e-9);
    }

    #[test]
    fn report_table_and_feet() {
        let truth = line(25, 0.0);
        let rep = MetricReport::from_pairs(&[(line(25, 0.3048), truth)], 6).unwrap();
        let ft = rep.in_feet();
        assert!((ft.ade - 1.0).abs() < 1e-12);
        assert_eq!(ft.unit, "ft");
        let t = rep.table();
        assert!(t.contains("5s") && t.contains("ADE 0.305"));
    }
}
