use std::collections::HashMap;

use epn::data::{AgentHistory, SceneWindow, State};
use epn::geometry::{build_occupancy_mask, scatter_social_tensor, to_target_frame, GridSpec};
use epn::metrics::{ade_fde, best_hypothesis, mean_error};
use epn::model::{kl_loss, LatentGaussian};
use epn::predict::{displacements_between, integrate_displacements};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = [f64; 2]> {
    (-50.0..50.0f64, -200.0..200.0f64).prop_map(|(x, y)| [x, y])
}

fn path(len: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(point(), len)
}

fn state(p: [f64; 2]) -> State {
    State { x: p[0], y: p[1], v: 20.0, a: 0.0 }
}

fn window(origin: [f64; 2], others: Vec<[f64; 2]>) -> SceneWindow {
    let hist = |p: [f64; 2]| vec![state([p[0], p[1] - 4.0]), state(p)];
    let neighbors: Vec<AgentHistory> =
        others.iter().enumerate().map(|(i, &p)| AgentHistory { vehicle_id: 10 + i as i64, states: hist(p) }).collect();
    SceneWindow {
        window_id: 0,
        target_id: 1,
        ego_id: 10,
        t_now: 1,
        timestamp: 0.0,
        target: AgentHistory { vehicle_id: 1, states: hist(origin) },
        neighbors,
        future: vec![state([origin[0], origin[1] + 4.0])],
        ego_plan: vec![[origin[0], origin[1] + 2.0]],
    }
}

proptest! {
    #[test]
    fn integration_inverts_differencing(origin in point(), p in path(25)) {
        let back = integrate_displacements(origin, &displacements_between(origin, &p));
        for (a, b) in back.iter().zip(&p) {
            prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn best_hypothesis_is_the_argmin(truth in path(6), hyps in prop::collection::vec(path(6), 1..8)) {
        let best = best_hypothesis(&hyps, &truth).unwrap();
        let errs: Vec<f64> = hyps.iter().map(|h| mean_error(h, &truth).unwrap()).collect();
        prop_assert!(errs.iter().all(|&e| errs[best] <= e));
        prop_assert!(errs[..best].iter().all(|&e| e > errs[best]));
    }

    #[test]
    fn more_hypotheses_never_hurt(truth in path(5), hyps in prop::collection::vec(path(5), 2..8)) {
        let err = |k: usize| {
            let i = best_hypothesis(&hyps[..k], &truth).unwrap();
            mean_error(&hyps[i], &truth).unwrap()
        };
        for k in 1..hyps.len() {
            prop_assert!(err(k + 1) <= err(k));
        }
    }

    #[test]
    fn ade_fde_are_zero_only_on_exact_paths(p in path(4), q in path(4)) {
        let (ade, fde) = ade_fde(&[(p.clone(), p.clone())]).unwrap();
        prop_assert_eq!((ade, fde), (0.0, 0.0));
        let (ade, fde) = ade_fde(&[(p.clone(), q.clone())]).unwrap();
        prop_assert!(ade >= 0.0 && fde >= 0.0);
        prop_assert!(fde <= 4.0 * ade + 1e-9);
    }

    #[test]
    fn kl_is_non_negative(mu in prop::collection::vec(-5.0..5.0f64, 1..16), seed in any::<u64>()) {
        let log_var: Vec<f64> = mu.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let kl = kl_loss(&LatentGaussian { mu, log_var });
        prop_assert!(kl >= 0.0);
    }

    #[test]
    fn cells_contain_their_points(x in -10.0..10.0f64, y in -40.0..40.0f64) {
        let g = GridSpec::default();
        match g.cell_of(x, y) {
            Some((i, j)) => {
                let y0 = -g.length / 2.0 + i as f64 * g.cell_length();
                let x0 = -g.width / 2.0 + j as f64 * g.cell_width();
                prop_assert!(y >= y0 - 1e-9 && y < y0 + g.cell_length() + 1e-9);
                prop_assert!(x >= x0 - 1e-9 && x < x0 + g.cell_width() + 1e-9);
            }
            None => prop_assert!(x.abs() >= g.width / 2.0 - 1e-12 || y.abs() >= g.length / 2.0 - 1e-12),
        }
    }

    #[test]
    fn framing_puts_the_target_at_the_origin(origin in point(), others in path(4)) {
        let w = to_target_frame(&window(origin, others.clone()));
        prop_assert_eq!(w.target_position(), [0.0, 0.0]);
        for (n, p) in w.neighbors.iter().zip(&others) {
            let s = n.states.last().unwrap();
            prop_assert!((s.x - (p[0] - origin[0])).abs() < 1e-9 && (s.y - (p[1] - origin[1])).abs() < 1e-9);
        }
    }

    #[test]
    fn scatter_fills_exactly_the_occupied_cells(others in prop::collection::vec((-8.0..8.0f64, -35.0..35.0f64), 0..12)) {
        let g = GridSpec::default();
        let w = window([0.0, 0.0], others.iter().map(|&(x, y)| [x, y]).collect());
        let occ = build_occupancy_mask(&w, &g);
        let winners = occ.resolved();
        prop_assert_eq!(winners.len(), occ.mask.occupied());
        for a in &occ.assignments {
            let win = winners.iter().find(|b| b.cell == a.cell).unwrap();
            prop_assert!(win.distance <= a.distance);
        }
        let features: HashMap<i64, Vec<f64>> = w.neighbors.iter().map(|n| (n.vehicle_id, vec![1.0 + n.vehicle_id as f64; 3])).collect();
        let t = scatter_social_tensor(&occ, &features, 3).unwrap();
        let filled = t.nonzero_cells();
        prop_assert_eq!(filled, winners.iter().map(|a| a.cell).collect::<Vec<_>>());
    }
}
