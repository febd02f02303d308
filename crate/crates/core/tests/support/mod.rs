pub mod gradcases;
pub mod impulse;
pub mod metric_oracles;
pub mod naive_conv;
