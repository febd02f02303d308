//! Network architectures: declarative layouts and trainable models.

mod model;
mod spec;
mod units;

pub use model::{layout_parameter_count, Model};
pub use spec::{BlockKind, LayerDesc, LayerOp, ModelKind, NetSpec, Stage, DEPTH};
pub use units::{ConvLayer, ConvUnit, NamedParam, ParamRole, ResidualBlock};
