use alloc::string::String;

/// Errors raised by the core engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training fault: {0}")]
    TrainingFault(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}
pub(crate) use shape_err;
