//! A small neural-network kernel: batched tensors, convolution / dense /
//! LeakyReLU / flatten layers with exact backpropagation, Huber and MSE
//! losses, an adaptive-moment optimizer and soft target updates.

mod loss;
mod network;
mod optim;
mod tensor;

pub use loss::{huber_loss, huber_loss_weighted, mse_loss_weighted, Loss};
pub use network::{ForwardCache, Gradients, LayerShape, LayerSpec, Network, NetworkSpec};
pub use optim::{soft_update, Adam, AdamConfig};
pub use tensor::Tensor;
