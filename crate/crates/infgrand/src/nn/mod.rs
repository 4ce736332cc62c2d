//! Dense model machinery: the two fixed architectures, softmax, manual
//! gradients, the finite-difference oracle and the optimizer.

pub mod adam;
pub mod backward;
pub mod checkpoint;
pub mod forward;
pub mod init;
pub mod params;
pub mod softmax;

pub use adam::OptimizerState;
pub use backward::{
    analytic_ld_gradients, backward_supervised, backward_total, finite_difference, gcn_backward,
    ld_edge_gradient, StudentStep,
};
pub use checkpoint::{load_gcn, load_mlp, save_gcn, save_mlp};
pub use forward::{gcn_forward, mlp_forward, mlp_forward_masked, sample_dropout_mask};
pub use init::{init_gcn, init_mlp};
pub use params::{GcnGradients, GcnParams, MlpGradients, MlpParams};
pub use softmax::{log_softmax_rows, softmax_jacobian, softmax_rows};
