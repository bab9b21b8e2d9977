//! Dense matrix kernels, activations, initialization and the finite-difference
//! gradient oracle used to certify hand-written backward passes.

mod gradcheck;
mod matrix;
mod rng;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error, DEFAULT_FD_EPS};
pub use matrix::{
    dot, init_matrix, log_softmax_in_place, sigmoid, sigmoid_scalar, softmax, softmax_in_place,
    tanh_m, InitScheme, Matrix,
};
pub use rng::Rng;
