//! Fusion of the temporal and semantic codes, and the fixed tanh projection.
//!
//! The projection weights are never stored or trained. Entry `(i, j)` of the
//! `D x d` matrix is the `(i*d + j)`-th output of a SplitMix64 stream keyed by
//! `(seed, d, D)`, mapped to the open interval `(-s, s)` with
//! `s = sqrt(6 / (d + D))`. Any entry can therefore be regenerated in O(1), which
//! keeps very wide inputs tractable without materializing the matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hft::SEGMENTS;

/// Sizes of the four code components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeLayout {
    pub p: usize,
    /// Neurons of the 2D extraction layer.
    pub m: usize,
    /// Neurons of the 3D extraction layer.
    pub k: usize,
    /// Object labels.
    pub objects: usize,
    /// Values per object label (`2 + 2(q-1)`).
    pub object_block: usize,
    /// Action labels; 0 when action outputs are not used.
    pub actions: usize,
}

impl CodeLayout {
    pub fn alpha_len(&self) -> usize {
        SEGMENTS * self.p * self.m
    }

    pub fn beta_len(&self) -> usize {
        SEGMENTS * self.p * self.k
    }

    pub fn gamma_len(&self) -> usize {
        self.object_block * self.objects
    }

    pub fn eta_len(&self) -> usize {
        2 * self.actions
    }

    /// `7p(m + k) + block|L| + 2|A|`
    pub fn dim(&self) -> usize {
        self.alpha_len() + self.beta_len() + self.gamma_len() + self.eta_len()
    }
}

/// `v = [alpha; beta; gamma; eta]`, each checked against `layout`.
pub fn concat_code(layout: &CodeLayout, alpha: &[f64], beta: &[f64], gamma: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
    for (what, expected, got) in [
        ("alpha", layout.alpha_len(), alpha.len()),
        ("beta", layout.beta_len(), beta.len()),
        ("gamma", layout.gamma_len(), gamma.len()),
        ("eta", layout.eta_len(), eta.len()),
    ] {
        if expected != got {
            return Err(Error::Dimension { what, expected, got });
        }
    }
    let mut v = Vec::with_capacity(layout.dim());
    v.extend_from_slice(alpha);
    v.extend_from_slice(beta);
    v.extend_from_slice(gamma);
    v.extend_from_slice(eta);
    Ok(v)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The fixed, untrained `D x d` projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedProjection {
    pub seed: u64,
    pub input_dim: usize,
    pub output_dim: usize,
    key: u64,
}

pub fn make_projection(input_dim: usize, output_dim: usize, seed: u64) -> Result<FixedProjection> {
    if input_dim == 0 || output_dim == 0 {
        return Err(Error::Argument(format!(
            "projection dimensions must be positive, got {output_dim}x{input_dim}"
        )));
    }
    let key = mix64(mix64(mix64(seed.wrapping_add(GOLDEN_GAMMA)) ^ input_dim as u64) ^ output_dim as u64);
    Ok(FixedProjection {
        seed,
        input_dim,
        output_dim,
        key,
    })
}

impl FixedProjection {
    /// Half-width `s` of the uniform weight distribution.
    pub fn scale(&self) -> f64 {
        (6.0 / (self.input_dim + self.output_dim) as f64).sqrt()
    }

    #[inline]
    fn unit(&self, index: u64) -> f64 {
        let x = mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
        // (x + 0.5) / 2^53 lies strictly inside (0, 1)
        ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        let u = self.unit((row as u64) * self.input_dim as u64 + col as u64);
        (2.0 * u - 1.0) * self.scale()
    }

    /// Row-major copy of the whole matrix.
    pub fn matrix(&self) -> Vec<f64> {
        (0..self.output_dim)
            .flat_map(|i| (0..self.input_dim).map(move |j| self.weight(i, j)))
            .collect()
    }

    /// `tanh(W v)`. Rows are independent and each row sums its terms in a fixed
    /// order (four interleaved partial sums, then combined pairwise), so the
    /// result does not depend on the number of worker threads.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim {
            return Err(Error::Dimension {
                what: "projection input",
                expected: self.input_dim,
                got: v.len(),
            });
        }
        let s = self.scale();
        let d = self.input_dim as u64;
        Ok((0..self.output_dim)
            .into_par_iter()
            .map(|i| {
                let base = i as u64 * d;
                let mut acc = [0.0f64; 4];
                let mut chunks = v.chunks_exact(4);
                let mut j = base;
                for c in &mut chunks {
                    for (a, &x) in acc.iter_mut().zip(c) {
                        *a += (2.0 * self.unit(j) - 1.0) * x;
                        j += 1;
                    }
                }
                for (a, &x) in acc.iter_mut().zip(chunks.remainder()) {
                    *a += (2.0 * self.unit(j) - 1.0) * x;
                    j += 1;
                }
                (((acc[0] + acc[1]) + (acc[2] + acc[3])) * s).tanh()
            })
            .collect())
    }
}

/// Free-function form of [`FixedProjection::project`].
pub fn project(v: &[f64], proj: &FixedProjection) -> Result<Vec<f64>> {
    proj.project(v)
}

/// Fused code of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualCode {
    pub video_id: String,
    pub v: Vec<f64>,
    pub upsilon: Vec<f64>,
}

/// Self-describing metadata shared by every code in a directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeManifest {
    pub layout: CodeLayout,
    pub d: usize,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub q: usize,
    pub max_objects: usize,
    pub has_actions: bool,
    pub object_labels: Vec<String>,
    pub action_labels: Vec<String>,
    pub videos: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let l = CodeLayout {
            p: 1,
            m: 2,
            k: 3,
            objects: 1,
            object_block: 10,
            actions: 1,
        };
        assert_eq!(l.dim(), 47);
        let paper = CodeLayout {
            p: 4,
            m: 1536,
            k: 4096,
            objects: 0,
            object_block: 10,
            actions: 0,
        };
        assert_eq!((paper.alpha_len(), paper.beta_len()), (43008, 114688));
    }

    #[test]
    fn concat_order_and_checks() {
        let l = CodeLayout {
            p: 1,
            m: 1,
            k: 1,
            objects: 1,
            object_block: 2,
            actions: 1,
        };
        let a = [1.0; 7];
        let b = [2.0; 7];
        let v = concat_code(&l, &a, &b, &[3.0, 3.0], &[4.0, 4.0]).unwrap();
        assert_eq!(v.len(), 18);
        assert_eq!((v[0], v[7], v[14], v[16]), (1.0, 2.0, 3.0, 4.0));
        assert!(matches!(
            concat_code(&l, &a, &b, &[3.0], &[4.0, 4.0]),
            Err(Error::Dimension { what: "gamma", .. })
        ));
        let zero = concat_code(&l, &[0.0; 7], &[0.0; 7], &[0.0; 2], &[0.0; 2]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projection_is_reproducible() {
        let a = make_projection(47, 64, 9).unwrap();
        let b = make_projection(47, 64, 9).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_ne!(a.matrix(), make_projection(47, 64, 10).unwrap().matrix());
        assert_ne!(a.matrix()[..47], make_projection(48, 64, 9).unwrap().matrix()[..47]);
        assert!((make_projection(47, 2048, 0).unwrap().scale() - 0.05352).abs() < 5e-6);
        assert!(make_projection(0, 4, 0).is_err());
    }

    #[test]
    fn weights_uniform_and_centred() {
        let p = make_projection(300, 400, 1).unwrap();
        let w = p.matrix();
        let s = p.scale();
        assert!(w.iter().all(|x| x.abs() < s));
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        // uniform(-s, s) has sigma = s / sqrt(3); the mean of n draws sigma / sqrt(n)
        let sigma_mean = s / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * sigma_mean, "{mean} vs {sigma_mean}");
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var / (s * s / 3.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn project_examples() {
        let p = make_projection(5, 7, 3).unwrap();
        assert_eq!(p.project(&[0.0; 5]).unwrap(), vec![0.0; 7]);
        assert!(p.project(&[0.0; 4]).is_err());
        let w = p.matrix();
        let v = [0.3, -1.0, 2.0, 0.0, 5.0];
        let y = project(&v, &p).unwrap();
        for (i, yi) in y.iter().enumerate() {
            let dot: f64 = (0..5).map(|j| w[i * 5 + j] * v[j]).sum();
            assert!((yi - dot.tanh()).abs() < 1e-12);
            assert!(yi.abs() < 1.0);
        }
        // scalar tanh oracle
        assert!((0.5f64.tanh() - 0.4621171).abs() < 1e-7);
    }

    #[test]
    fn saturates_under_scaling() {
        let p = make_projection(6, 8, 2).unwrap();
        let v = [0.1, -0.2, 0.3, 0.0, 0.5, -0.4];
        let y = p.project(&v.map(|x| x * 1e4)).unwrap();
        assert!(y.iter().all(|x| x.abs() > 0.999));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let p = make_projection(333, 97, 5).unwrap();
        let v: Vec<f64> = (0..333).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| p.project(&v).unwrap());
        let b = three.install(|| p.project(&v).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dim_formula(p in 1usize..8, m in 1usize..50, k in 1usize..50, objects in 0usize..20, q in 2usize..8, actions in 0usize..20) {
                let l = CodeLayout { p, m, k, objects, object_block: 2 + 2 * (q - 1), actions };
                prop_assert_eq!(l.dim(), 7 * p * (m + k) + (2 * q) * objects + 2 * actions);
                let v = concat_code(&l, &vec![0.0; l.alpha_len()], &vec![0.0; l.beta_len()], &vec![0.0; l.gamma_len()], &vec![0.0; l.eta_len()]).unwrap();
                prop_assert_eq!(v.len(), l.dim());
            }
        }
    }
}
