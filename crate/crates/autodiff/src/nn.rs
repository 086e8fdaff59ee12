//! Layers built from tape primitives.

use rand::Rng;

use crate::graph::{GridShape, ZERO_SLOT};
use crate::{Graph, Matrix, NodeId, ParamId, ParamStore, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(s) => g.leaky_relu(x, T::of(s)),
            Activation::Tanh => g.tanh(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    x * s
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.uniform(format!("{name}.weight"), input, output, input, rng);
        let bias = store.uniform(format!("{name}.bias"), 1, output, input, rng);
        Self { weight, bias, input, output }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        assert_eq!(g.shape(x).1, self.input, "linear input width");
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }
}

/// Stack of linear layers; `hidden` activation between layers, `output` after the last.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, hidden, output }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.output).unwrap_or(0)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, mut x: NodeId) -> NodeId {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x);
            let act = if i == last { self.output } else { self.hidden };
            x = act.apply(g, x);
        }
        x
    }
}

/// LSTM cell, gate order (input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl Lstm {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_input = store.uniform(format!("{name}.w_input"), input, 4 * hidden, hidden, rng);
        let w_hidden = store.uniform(format!("{name}.w_hidden"), hidden, 4 * hidden, hidden, rng);
        let bias = store.uniform(format!("{name}.bias"), 1, 4 * hidden, hidden, rng);
        Self { w_input, w_hidden, bias, input, hidden }
    }

    /// One step; `state = None` means zero initial state.
    pub fn step<T: Real>(&self, g: &mut Graph<T>, x: NodeId, state: Option<LstmState>) -> LstmState {
        let h = self.hidden;
        let wi = g.param(self.w_input);
        let b = g.param(self.bias);
        let xi = g.matmul(x, wi);
        let mut gates = g.add_bias(xi, b);
        if let Some(s) = state {
            let wh = g.param(self.w_hidden);
            let hh = g.matmul(s.h, wh);
            gates = g.add(gates, hh);
        }
        let i = g.slice_cols(gates, 0, h);
        let i = g.sigmoid(i);
        let cand = g.slice_cols(gates, 2 * h, h);
        let cand = g.tanh(cand);
        let o = g.slice_cols(gates, 3 * h, h);
        let o = g.sigmoid(o);
        let ic = g.mul(i, cand);
        let c = match state {
            Some(s) => {
                let f = g.slice_cols(gates, h, h);
                let f = g.sigmoid(f);
                let fc = g.mul(f, s.c);
                g.add(fc, ic)
            }
            None => ic,
        };
        let tc = g.tanh(c);
        let hn = g.mul(o, tc);
        LstmState { h: hn, c }
    }

    /// Runs over `inputs` (one `batch×input` node per timestep) and returns the final state.
    pub fn unroll<T: Real>(&self, g: &mut Graph<T>, inputs: &[NodeId]) -> LstmState {
        assert!(!inputs.is_empty(), "LSTM unroll over an empty sequence");
        let mut state = None;
        for &x in inputs {
            state = Some(self.step(g, x, state));
        }
        state.expect("non-empty sequence")
    }
}

/// Valid (unpadded), unit-stride 2-D convolution over channels-last grids.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv2d {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel.0 * kernel.1 * in_channels;
        let weight = store.uniform(format!("{name}.weight"), fan_in, out_channels, fan_in, rng);
        let bias = store.uniform(format!("{name}.bias"), 1, out_channels, fan_in, rng);
        Self { weight, bias, kernel, in_channels, out_channels }
    }

    pub fn output_shape(&self, input: GridShape) -> Option<GridShape> {
        let (kh, kw) = self.kernel;
        if input.height < kh || input.width < kw {
            return None;
        }
        Some(GridShape::new(input.height - kh + 1, input.width - kw + 1, self.out_channels))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: NodeId, shape: GridShape) -> (NodeId, GridShape) {
        assert_eq!(shape.channels, self.in_channels, "conv input channels");
        let out = self.output_shape(shape).expect("conv kernel larger than grid");
        let batch = g.shape(x).0;
        let (kh, kw) = self.kernel;
        let patch = kh * kw * shape.channels;
        let rows = batch * out.height * out.width;
        let mut index = Vec::with_capacity(rows * patch);
        for b in 0..batch {
            let base = b * shape.len();
            for oh in 0..out.height {
                for ow in 0..out.width {
                    for i in 0..kh {
                        for j in 0..kw {
                            let start = base + shape.offset(oh + i, ow + j, 0);
                            index.extend(start..start + shape.channels);
                        }
                    }
                }
            }
        }
        debug_assert!(index.iter().all(|&i| i != ZERO_SLOT));
        let cols = g.gather(x, index, rows, patch);
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(cols, w);
        let y = g.add_bias(y, b);
        (g.reshape(y, batch, out.len()), out)
    }
}

/// Reference convolution used by tests.
pub fn conv2d_naive(
    input: &[f64],
    shape: GridShape,
    weight: &Matrix<f64>,
    bias: &[f64],
    kernel: (usize, usize),
) -> Vec<f64> {
    let (kh, kw) = kernel;
    let oc = bias.len();
    let oh = shape.height + 1 - kh;
    let ow = shape.width + 1 - kw;
    let mut out = vec![0.0; oh * ow * oc];
    for r in 0..oh {
        for c in 0..ow {
            for o in 0..oc {
                let mut acc = bias[o];
                for i in 0..kh {
                    for j in 0..kw {
                        for ch in 0..shape.channels {
                            let wrow = (i * kw + j) * shape.channels + ch;
                            acc += input[shape.offset(r + i, c + j, ch)] * weight.get(wrow, o);
                        }
                    }
                }
                out[(r * ow + c) * oc + o] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let conv = Conv2d::new(&mut store, "c", (3, 2), 2, 4, &mut rng);
        let shape = GridShape::new(5, 3, 2);
        let batch = 2;
        let input = Matrix::from_fn(batch, shape.len(), |_, _| rng.random_range(-1.0..1.0));
        let mut g = Graph::new(&store);
        let x = g.constant(input.clone());
        let (y, out) = conv.forward(&mut g, x, shape);
        assert_eq!(out, GridShape::new(3, 2, 4));
        for b in 0..batch {
            let expected = conv2d_naive(input.row(b), shape, store.get(conv.weight), store.get(conv.bias).data(), (3, 2));
            for (a, e) in g.value(y).row(b).iter().zip(&expected) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lstm_final_state_depends_on_first_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::<f64>::new();
        let lstm = Lstm::new(&mut store, "l", 2, 5, &mut rng);
        let run = |first: f64| {
            let mut g = Graph::new(&store);
            let xs: Vec<NodeId> = (0..4)
                .map(|t| g.constant(Matrix::from_vec(1, 2, vec![if t == 0 { first } else { 0.3 }, -0.1])))
                .collect();
            let s = lstm.unroll(&mut g, &xs);
            g.value(s.h).clone()
        };
        assert_ne!(run(0.0), run(1.0));
        assert_eq!(run(0.5), run(0.5));
    }
}
