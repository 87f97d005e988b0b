//! Finite-difference gradient checks; see `support/gradients.rs`.

mod support;

use support::gradients::{self, Report, TOL};

fn run(check: fn(&mut Report)) {
    let mut rep = Report::default();
    check(&mut rep);
    assert!(!rep.errors.is_empty());
    for (label, e) in &rep.errors {
        assert!(*e <= TOL, "{label}: relative error {e:e}");
    }
}

#[test]
fn conv2d_gradients() {
    run(gradients::conv2d_gradients);
}

#[test]
fn conv_transpose_gradients() {
    run(gradients::conv_transpose_gradients);
}

#[test]
fn batchnorm_train_mode_gradients() {
    run(gradients::batchnorm_train_mode_gradients);
}

#[test]
fn batchnorm_eval_mode_gradients() {
    run(gradients::batchnorm_eval_mode_gradients);
}

#[test]
fn activation_gradients() {
    run(gradients::activation_gradients);
}

#[test]
fn linear_sigmoid_gradients() {
    run(gradients::linear_sigmoid_gradients);
}

#[test]
fn latent_map_conv_gradients() {
    run(gradients::latent_map_conv_gradients);
}

#[test]
fn latent_map_conv_equals_tiled_concat_convolution() {
    gradients::latent_map_conv_equals_tiled_concat_convolution();
}

#[test]
fn generator_gradients_train_mode() {
    run(gradients::generator_gradients_train_mode);
}

#[test]
fn generator_latent_gradient_eval_mode() {
    run(gradients::generator_latent_gradient_eval_mode);
}

#[test]
fn discriminator_gradients() {
    run(gradients::discriminator_gradients);
}

#[test]
fn inpainting_objective_latent_gradient() {
    run(gradients::inpainting_objective_latent_gradient);
}
