//! A minimal reverse-mode engine: tape, parameter store, dense and
//! channel-attention layers, losses and SGD.

mod loss;
mod network;
mod optim;
mod params;
mod tape;
mod train;

pub use loss::{loss_and_grad, LossKind};
pub use network::{
    AttentionSpec, GateKind, HiddenActivation, InitConfig, Inspection, Mode, ModelSpec, Network, SiteValue,
};
pub use optim::Sgd;
pub use params::{NamedTensor, ParamGrads, ParamId, ParamRole, ParamStore};
pub use tape::{BoundParams, NodeId, Tape};
pub use train::{evaluate_grouped, grouped_accuracy, train, GroupAccuracy, TrainConfig, TrainHistory, Trajectory};
