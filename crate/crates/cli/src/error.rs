//! Error categories and their process exit codes.

use amberflag::classical::ClassicalError;
use amberflag::evaluation::EvalError;
use amberflag::ingest::IngestError;
use amberflag::io::IoError;
use amberflag::models::ModelError;
use amberflag::training::TrainError;
use amberflag::EventError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numeric => 4,
            Category::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Category::Data, message)
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn classical_category(e: &ClassicalError) -> Category {
    match e {
        ClassicalError::InvalidParams(_) | ClassicalError::NotStationary(_) => Category::Config,
        ClassicalError::ExplosionGuard(_) | ClassicalError::NonFiniteLoss | ClassicalError::Autodiff(_) => Category::Numeric,
        ClassicalError::File { .. } => Category::Io,
        _ => Category::Data,
    }
}

fn model_category(e: &ModelError) -> Category {
    match e {
        ModelError::ConfigMismatch(_) | ModelError::UnknownKind(_) | ModelError::UnsupportedForIF => Category::Config,
        ModelError::NonPositiveGap(_) | ModelError::QuadratureOverflow { .. } | ModelError::Autodiff(_) => Category::Numeric,
        ModelError::QueryBeforeLastEvent { .. } => Category::Data,
        ModelError::Checkpoint(_) => Category::Io,
        ModelError::Classical(c) => classical_category(c),
    }
}

macro_rules! categorize {
    ($ty:ty, |$e:ident| $body:expr) => {
        impl From<$ty> for CliError {
            fn from($e: $ty) -> Self {
                let category = $body;
                CliError::new(category, $e.to_string())
            }
        }
    };
}

categorize!(ClassicalError, |e| classical_category(&e));
categorize!(ModelError, |e| model_category(&e));
categorize!(EventError, |e| match e {
    EventError::BadRatios(_) | EventError::BadCatalog(_) => Category::Config,
    _ => Category::Data,
});
categorize!(IoError, |e| match e {
    IoError::Io { .. } => Category::Io,
    _ => Category::Data,
});
categorize!(IngestError, |e| match &e {
    IngestError::BadRule { .. } | IngestError::BadConfig(_) => Category::Config,
    IngestError::Io { .. } => Category::Io,
    _ => Category::Data,
});
categorize!(TrainError, |e| match &e {
    TrainError::NonFiniteLoss { .. } => Category::Numeric,
    TrainError::EmptyTrain => Category::Data,
    TrainError::BadConfig(_) => Category::Config,
    TrainError::Model(m) => model_category(m),
    TrainError::Io { .. } => Category::Io,
});
categorize!(EvalError, |e| match &e {
    EvalError::EmptySplit | EvalError::EmptySequence => Category::Data,
    EvalError::HorizonOverflow { .. } => Category::Numeric,
    EvalError::Model(m) => model_category(m),
    EvalError::Io { .. } => Category::Io,
});
