use crate::{Matrix, ParamStore, Real};

/// Adam with optional global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

/// Serializable optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, learning_rate: f64) -> Self {
        let zeros = || store.ids().map(|id| Matrix::zeros(store.get(id).rows(), store.get(id).cols())).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn with_clip_norm(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; returns the pre-clipping global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Matrix<T>]) -> f64 {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        let norm = grads.iter().map(|g| g.squared_norm().to_f64_lossless()).sum::<f64>().sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step_size = T::of(self.learning_rate / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.epsilon);
        let scale = T::of(scale);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g[j] * scale;
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                p[j] -= step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
            }
        }
        norm
    }

    pub fn state(&self) -> AdamState {
        let dump = |ms: &[Matrix<T>]| ms.iter().map(|m| m.data().iter().map(|v| v.to_f64_lossless()).collect()).collect();
        AdamState { step: self.step, first: dump(&self.first), second: dump(&self.second) }
    }

    pub fn restore(&mut self, state: &AdamState) -> Result<(), String> {
        if state.first.len() != self.first.len() || state.second.len() != self.second.len() {
            return Err(format!("optimizer state has {} slots, expected {}", state.first.len(), self.first.len()));
        }
        for (dst, src) in self.first.iter_mut().chain(self.second.iter_mut()).zip(state.first.iter().chain(&state.second)) {
            if dst.len() != src.len() {
                return Err(format!("optimizer slot has {} values, expected {}", src.len(), dst.len()));
            }
            for (d, &s) in dst.data_mut().iter_mut().zip(src) {
                *d = T::of(s);
            }
        }
        self.step = state.step;
        Ok(())
    }
}
