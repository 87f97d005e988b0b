//! Pointwise nonlinearities. Each backward takes the forward output (or
//! input, for the rectifiers) it needs.

use super::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn relu<T: Scalar>(mut x: Tensor<T>) -> Tensor<T> {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    x
}

/// `out` is the forward output of [`relu`].
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    dy
}

pub fn leaky_relu<T: Scalar>(mut x: Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = *v * slope;
        }
    }
    x
}

/// `out` is the forward output of [`leaky_relu`]; its sign matches the input's.
pub fn leaky_relu_backward<T: Scalar>(out: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o < T::zero() {
            *g = *g * slope;
        }
    }
    dy
}

pub fn tanh<T: Scalar>(mut x: Tensor<T>) -> Tensor<T> {
    for v in x.data_mut() {
        *v = v.tanh();
    }
    x
}

pub fn tanh_backward<T: Scalar>(out: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        *g = *g * (T::one() - o * o);
    }
    dy
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
