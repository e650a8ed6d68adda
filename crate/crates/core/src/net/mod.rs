//! Shared-backbone multilayer perceptron with softmax heads.

mod backward;
mod io;
mod loss;
mod model;
mod optim;
mod warm;

pub use backward::{backward, backward_rows, loss_value, GradientBundle, Trace};
pub use io::{deserialize, deserialize_expecting, serialize, FORMAT_VERSION};
pub use loss::{
    complement, logit_grad_from_prob_grad, neg_log, softmax_backward, BatchLoss, BatchScores, CrossEntropy, PROB_FLOOR,
};
pub(crate) use loss::ensure_finite;
pub use model::{softmax, Activation, BackboneSpec, Dense, SelectiveModel};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use warm::{accuracy, fit, warm_start, FitConfig};
