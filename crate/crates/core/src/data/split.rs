use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::window::SceneWindow;
use crate::error::{EpnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<SceneWindow>,
    pub val: Vec<SceneWindow>,
    pub test: Vec<SceneWindow>,
}

impl DatasetSplit {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn all(&self) -> impl Iterator<Item = &SceneWindow> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    pub fn find(&self, window_id: u64) -> Option<&SceneWindow> {
        self.all().find(|w| w.window_id == window_id)
    }
}

/// Sizes of the validation and test parts (floor rounding); the remainder trains.
pub fn split_sizes(n: usize, ratios: (u32, u32, u32)) -> (usize, usize, usize) {
    let total = (ratios.0 + ratios.1 + ratios.2) as usize;
    let val = n * ratios.1 as usize / total;
    let test = n * ratios.2 as usize / total;
    (n - val - test, val, test)
}

/// Seeded shuffle into train/val/test. Each part keeps window-id order.
pub fn split_dataset(scenes: Vec<SceneWindow>, ratios: (u32, u32, u32), seed: u64) -> Result<DatasetSplit> {
    if scenes.is_empty() {
        return Err(EpnError::Argument("cannot split an empty scene collection".into()));
    }
    if ratios.0 + ratios.1 + ratios.2 == 0 {
        return Err(EpnError::Argument("split ratios sum to zero".into()));
    }
    let (n_train, n_val, _) = split_sizes(scenes.len(), ratios);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut part = vec![0u8; scenes.len()];
    for (rank, &i) in order.iter().enumerate() {
        part[i] = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
    }
    let mut split = DatasetSplit { seed, train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (w, p) in scenes.into_iter().zip(part) {
        match p {
            0 => split.train.push(w),
            1 => split.val.push(w),
            _ => split.test.push(w),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::window::{AgentHistory, SceneWindow};

    fn scenes(n: usize) -> Vec<SceneWindow> {
        (0..n)
            .map(|i| SceneWindow {
                window_id: i as u64,
                target_id: i as i64,
                ego_id: 0,
                t_now: 0,
                timestamp: 0.0,
                target: AgentHistory { vehicle_id: i as i64, states: vec![] },
                neighbors: vec![],
                future: vec![],
                ego_plan: vec![],
            })
            .collect()
    }

    #[test]
    fn proportions() {
        assert_eq!(split_dataset(scenes(100), (7, 1, 2), 1).unwrap().counts(), (70, 10, 20));
        assert_eq!(split_dataset(scenes(10), (7, 1, 2), 1).unwrap().counts(), (7, 1, 2));
        assert_eq!(split_sizes(13, (7, 1, 2)), (10, 1, 2));
    }

    #[test]
    fn deterministic_disjoint_exhaustive() {
        let a = split_dataset(scenes(57), (7, 1, 2), 42).unwrap();
        let b = split_dataset(scenes(57), (7, 1, 2), 42).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<u64> = a.all().map(|w| w.window_id).collect();
        ids.sort();
        assert_eq!(ids, (0..57).collect::<Vec<_>>());
        let c = split_dataset(scenes(57), (7, 1, 2), 43).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn empty_rejected() {
        assert!(split_dataset(vec![], (7, 1, 2), 0).is_err());
    }
}
