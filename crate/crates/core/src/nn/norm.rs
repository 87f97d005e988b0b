use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use super::Mode;

pub const BN_EPS: f64 = 1e-5;
/// Weight kept by the running statistics at each training-mode forward pass.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over (batch, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    mode: Mode,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    batch_var_unbiased: Vec<T>,
    shape: [usize; 4],
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: store.push_const(format!("{name}.gamma"), vec![channels], 1.0, true),
            beta: store.push_const(format!("{name}.beta"), vec![channels], 0.0, true),
            running_mean: store.push_const(
                format!("{name}.running_mean"),
                vec![channels],
                0.0,
                false,
            ),
            running_var: store.push_const(
                format!("{name}.running_var"),
                vec![channels],
                1.0,
                false,
            ),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        mode: Mode,
    ) -> (Tensor<T>, BnCache<T>) {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.channels, "batchnorm channels");
        let plane = h * w;
        let count = n * plane;
        let eps = T::lit(BN_EPS);
        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);

        let (mean, var) = match mode {
            Mode::Train => {
                assert!(
                    count > 1,
                    "batch statistics need more than one value per channel"
                );
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for i in 0..n {
                        s = s + x.sample(i)[ch * plane..(ch + 1) * plane]
                            .iter()
                            .copied()
                            .sum();
                    }
                    let m = s / T::lit(count as f64);
                    let mut sq = T::zero();
                    for i in 0..n {
                        for &v in &x.sample(i)[ch * plane..(ch + 1) * plane] {
                            sq = sq + (v - m) * (v - m);
                        }
                    }
                    mean[ch] = m;
                    var[ch] = sq / T::lit(count as f64);
                }
                (mean, var)
            }
            Mode::Eval => (
                store.get(self.running_mean).to_vec(),
                store.get(self.running_var).to_vec(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = vec![T::zero(); x.data().len()];
        for i in 0..n {
            let base = i * c * plane;
            for ch in 0..c {
                let off = base + ch * plane;
                for j in off..off + plane {
                    let xh = (x.data()[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = xh;
                    out.data_mut()[j] = gamma[ch] * xh + beta[ch];
                }
            }
        }
        let unbiased = T::lit(count as f64 / (count.max(2) - 1) as f64);
        (
            out,
            BnCache {
                mode,
                xhat,
                inv_std,
                batch_var_unbiased: var.iter().map(|&v| v * unbiased).collect(),
                batch_mean: mean,
                shape: x.shape(),
            },
        )
    }

    /// Fold a training-mode batch's statistics into the running estimates.
    pub fn update_running<T: Scalar>(&self, store: &mut ParamStore<T>, cache: &BnCache<T>) {
        if cache.mode != Mode::Train {
            return;
        }
        let keep = T::lit(BN_MOMENTUM);
        let take = T::one() - keep;
        for (r, &m) in store
            .get_mut(self.running_mean)
            .iter_mut()
            .zip(&cache.batch_mean)
        {
            *r = keep * *r + take * m;
        }
        for (r, &v) in store
            .get_mut(self.running_var)
            .iter_mut()
            .zip(&cache.batch_var_unbiased)
        {
            *r = keep * *r + take * v;
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &BnCache<T>,
        dy: &Tensor<T>,
        grads: Option<&mut Grads<T>>,
    ) -> Tensor<T> {
        let [n, c, h, w] = cache.shape;
        let plane = h * w;
        let count = T::lit((n * plane) as f64);
        let gamma = store.get(self.gamma);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    let g = dy.data()[j];
                    sum_dy[ch] = sum_dy[ch] + g;
                    sum_dy_xhat[ch] = sum_dy_xhat[ch] + g * cache.xhat[j];
                }
            }
        }
        if let Some(grads) = grads {
            for (g, s) in grads.get_mut(self.gamma).iter_mut().zip(&sum_dy_xhat) {
                *g = *g + *s;
            }
            for (g, s) in grads.get_mut(self.beta).iter_mut().zip(&sum_dy) {
                *g = *g + *s;
            }
        }
        let mut dx = Tensor::zeros(cache.shape);
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                let scale = gamma[ch] * cache.inv_std[ch];
                match cache.mode {
                    Mode::Eval => {
                        for j in off..off + plane {
                            dx.data_mut()[j] = scale * dy.data()[j];
                        }
                    }
                    Mode::Train => {
                        let mean_dy = sum_dy[ch] / count;
                        let mean_dy_xhat = sum_dy_xhat[ch] / count;
                        for j in off..off + plane {
                            dx.data_mut()[j] =
                                scale * (dy.data()[j] - mean_dy - cache.xhat[j] * mean_dy_xhat);
                        }
                    }
                }
            }
        }
        dx
    }
}
