//! Split Wide&Deep network written from scratch: parameters, range-restricted
//! passes, loss and SGD.

mod arch;
mod params;
mod pass;

pub use arch::ArchSpec;
pub use params::{
    init_params, Activation, ActivationFn, DenseLayer, EncoderParams, GradientBundle, RawBatch,
    SplitModelParams,
};
pub use pass::{
    backward_range, column, forward_range, forward_range_cached, mae, mse_loss_and_grad,
    sgd_step, ForwardState, LayerInput,
};
