//! One GRU step over a batch, and its exact backward pass.
//!
//! ```text
//! u  = sigmoid(W_u [h, x] + b_u)
//! r  = sigmoid(W_r [h, x] + b_r)
//! n  = tanh(W_h [r * h, x] + b_h)
//! h' = u * n + (1 - u) * h
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::params::GruLayerParams;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediates of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub h_prev: Array2<f64>,
    /// `[h_prev, x]`
    pub cat: Array2<f64>,
    /// `[r * h_prev, x]`
    pub cat_reset: Array2<f64>,
    pub u: Array2<f64>,
    pub r: Array2<f64>,
    pub n: Array2<f64>,
    pub h: Array2<f64>,
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

/// Batched step: `h_prev` is `batch x state`, `x` is `batch x input`.
pub fn step(p: &GruLayerParams, h_prev: ArrayView2<f64>, x: ArrayView2<f64>) -> StepCache {
    let state = p.state();
    let cat = concatenate(Axis(1), &[h_prev, x]).expect("batch sizes agree");
    let u = affine(&cat, &p.w_u, &p.b_u).mapv_into(sigmoid);
    let r = affine(&cat, &p.w_r, &p.b_r).mapv_into(sigmoid);
    let mut cat_reset = cat.clone();
    {
        let mut head = cat_reset.slice_mut(s![.., ..state]);
        head *= &r;
    }
    let n = affine(&cat_reset, &p.w_h, &p.b_h).mapv_into(f64::tanh);
    let h = &u * &n + &(1.0 - &u) * &h_prev;
    StepCache {
        h_prev: h_prev.to_owned(),
        cat,
        cat_reset,
        u,
        r,
        n,
        h,
    }
}

/// Accumulates parameter gradients into `grad` and returns `(d h_prev, d x)`.
pub fn step_backward(
    p: &GruLayerParams,
    cache: &StepCache,
    dh: &Array2<f64>,
    grad: &mut GruLayerParams,
) -> (Array2<f64>, Array2<f64>) {
    let state = p.state();
    let StepCache {
        h_prev, cat, cat_reset, u, r, n, ..
    } = cache;

    let dn = dh * u;
    let du = dh * &(n - h_prev);
    let mut dh_prev = dh * &(1.0 - u);

    let dzn = dn * &(1.0 - n * n);
    grad.w_h += &dzn.t().dot(cat_reset);
    grad.b_h += &dzn.sum_axis(Axis(0));
    let dcat_reset = dzn.dot(&p.w_h);
    let drh = dcat_reset.slice(s![.., ..state]);
    let mut dx = dcat_reset.slice(s![.., state..]).to_owned();
    let dr = &drh * h_prev;
    dh_prev += &(&drh * r);

    let dzu = du * u * &(1.0 - u);
    let dzr = dr * r * &(1.0 - r);
    grad.w_u += &dzu.t().dot(cat);
    grad.w_r += &dzr.t().dot(cat);
    grad.b_u += &dzu.sum_axis(Axis(0));
    grad.b_r += &dzr.sum_axis(Axis(0));
    let dcat = dzu.dot(&p.w_u) + dzr.dot(&p.w_r);
    dh_prev += &dcat.slice(s![.., ..state]);
    dx += &dcat.slice(s![.., state..]);
    (dh_prev, dx)
}

/// Single-vector GRU update.
pub fn gru_cell(p: &GruLayerParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if h_prev.len() != p.state() {
        return Err(Error::Dimension {
            what: "GRU hidden state",
            expected: p.state(),
            got: h_prev.len(),
        });
    }
    if x.len() != p.input() {
        return Err(Error::Dimension {
            what: "GRU input",
            expected: p.input(),
            got: x.len(),
        });
    }
    let h = ArrayView2::from_shape((1, h_prev.len()), h_prev).unwrap();
    let x = ArrayView2::from_shape((1, x.len()), x).unwrap();
    Ok(step(p, h, x).h.into_raw_vec_and_offset().0)
}
