use ndarray::{Array1, Array2};
use rand::Rng;

/// Gate weights over `[h, x]` (shape `state x (state + input)`) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_u: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b_u: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
}

impl GruLayerParams {
    pub fn zeros(state: usize, input: usize) -> Self {
        let w = || Array2::zeros((state, state + input));
        let b = || Array1::zeros(state);
        GruLayerParams {
            w_u: w(),
            w_r: w(),
            w_h: w(),
            b_u: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Uniform in `+-1/sqrt(state)`, biases zero.
    pub fn init(state: usize, input: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (state as f64).sqrt();
        let mut w = || Array2::from_shape_simple_fn((state, state + input), || rng.gen_range(-k..k));
        let (w_u, w_r, w_h) = (w(), w(), w());
        GruLayerParams {
            w_u,
            w_r,
            w_h,
            b_u: Array1::zeros(state),
            b_r: Array1::zeros(state),
            b_h: Array1::zeros(state),
        }
    }

    pub fn state(&self) -> usize {
        self.w_u.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_u.ncols() - self.w_u.nrows()
    }
}

/// Every trainable tensor of the language model. Gradients share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub embedding: Array2<f64>,
    pub layer1: GruLayerParams,
    pub layer2: GruLayerParams,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 15] = [
    "embedding",
    "layer1.w_u",
    "layer1.w_r",
    "layer1.w_h",
    "layer1.b_u",
    "layer1.b_r",
    "layer1.b_h",
    "layer2.w_u",
    "layer2.w_r",
    "layer2.w_h",
    "layer2.b_u",
    "layer2.b_r",
    "layer2.b_h",
    "output.w",
    "output.b",
];

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            layer1: GruLayerParams::zeros(self.layer1.state(), self.layer1.input()),
            layer2: GruLayerParams::zeros(self.layer2.state(), self.layer2.input()),
            out_w: Array2::zeros(self.out_w.raw_dim()),
            out_b: Array1::zeros(self.out_b.raw_dim()),
        }
    }

    /// `(rows, cols)` per tensor in [`TENSOR_NAMES`] order; vectors are one row.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let m = |a: &Array2<f64>| (a.nrows(), a.ncols());
        let v = |a: &Array1<f64>| (1, a.len());
        let layer = |l: &GruLayerParams| [m(&l.w_u), m(&l.w_r), m(&l.w_h), v(&l.b_u), v(&l.b_r), v(&l.b_h)];
        let mut out = vec![m(&self.embedding)];
        out.extend(layer(&self.layer1));
        out.extend(layer(&self.layer2));
        out.extend([m(&self.out_w), v(&self.out_b)]);
        out
    }

    /// Flat views in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let l1 = &self.layer1;
        let l2 = &self.layer2;
        [
            self.embedding.as_slice(),
            l1.w_u.as_slice(),
            l1.w_r.as_slice(),
            l1.w_h.as_slice(),
            l1.b_u.as_slice(),
            l1.b_r.as_slice(),
            l1.b_h.as_slice(),
            l2.w_u.as_slice(),
            l2.w_r.as_slice(),
            l2.w_h.as_slice(),
            l2.b_u.as_slice(),
            l2.b_r.as_slice(),
            l2.b_h.as_slice(),
            self.out_w.as_slice(),
            self.out_b.as_slice(),
        ]
        .into_iter()
        .map(|s| s.expect("parameters are contiguous"))
        .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let l1 = &mut self.layer1;
        let l2 = &mut self.layer2;
        [
            self.embedding.as_slice_mut(),
            l1.w_u.as_slice_mut(),
            l1.w_r.as_slice_mut(),
            l1.w_h.as_slice_mut(),
            l1.b_u.as_slice_mut(),
            l1.b_r.as_slice_mut(),
            l1.b_h.as_slice_mut(),
            l2.w_u.as_slice_mut(),
            l2.w_r.as_slice_mut(),
            l2.w_h.as_slice_mut(),
            l2.b_u.as_slice_mut(),
            l2.b_r.as_slice_mut(),
            l2.b_h.as_slice_mut(),
            self.out_w.as_slice_mut(),
            self.out_b.as_slice_mut(),
        ]
        .into_iter()
        .map(|s| s.expect("parameters are contiguous"))
        .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }
}
