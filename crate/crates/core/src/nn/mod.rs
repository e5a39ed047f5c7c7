//! Small convolutional networks with hand-written backward passes.

mod cnet;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;

pub use layers::Mode;
pub use model::{layout, Model, PathShapes, INPUT_HW};
pub use optim::Rmsprop;
pub use tensor::{Scalar, Tensor};
