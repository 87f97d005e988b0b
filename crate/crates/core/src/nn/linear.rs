use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, MatRef, Scalar, Tensor};

/// Fully connected layer on flattened samples, weight laid out `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        init_std: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        Linear {
            in_features,
            out_features,
            weight: store.push_normal(
                format!("{name}.weight"),
                vec![out_features, in_features],
                init_std,
                rng,
            ),
            bias: store.push_const(format!("{name}.bias"), vec![out_features], 0.0, true),
        }
    }

    /// Returns a `batch x out_features` row-major matrix.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Vec<T> {
        assert_eq!(x.sample_len(), self.in_features, "linear input size");
        let n = x.batch();
        let mut out = vec![T::zero(); n * self.out_features];
        gemm(
            T::one(),
            MatRef::new(x.data(), n, self.in_features),
            MatRef::new(store.get(self.weight), self.out_features, self.in_features).t(),
            T::zero(),
            &mut out,
            self.out_features,
        );
        let b = store.get(self.bias);
        for row in out.chunks_mut(self.out_features) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v = *v + bb;
            }
        }
        out
    }

    /// `input` is the forward input; `dy` is `batch x out_features`.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        input: &Tensor<T>,
        dy: &[T],
        grads: Option<&mut Grads<T>>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let n = input.batch();
        if let Some(grads) = grads {
            gemm(
                T::one(),
                MatRef::new(dy, n, self.out_features).t(),
                MatRef::new(input.data(), n, self.in_features),
                T::one(),
                grads.get_mut(self.weight),
                self.in_features,
            );
            let gb = grads.get_mut(self.bias);
            for row in dy.chunks(self.out_features) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        if !need_dx {
            return None;
        }
        let mut dx = Tensor::zeros(input.shape());
        gemm(
            T::one(),
            MatRef::new(dy, n, self.out_features),
            MatRef::new(store.get(self.weight), self.out_features, self.in_features),
            T::zero(),
            dx.data_mut(),
            self.in_features,
        );
        Some(dx)
    }
}
