//! Exit codes: 0 success, 2 usage, 3 I/O, 4 pipeline.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Usage,
    Io,
    Pipeline,
}

impl Stage {
    pub fn code(self) -> i32 {
        match self {
            Stage::Usage => 2,
            Stage::Io => 3,
            Stage::Pipeline => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub stage: Stage,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(stage: Stage, error: anyhow::Error) -> Self {
        Failure { stage, error }
    }

    pub fn usage(error: anyhow::Error) -> Self {
        Failure::new(Stage::Usage, error)
    }

    pub fn io(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(Stage::Io, error.into())
    }

    pub fn pipeline(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(Stage::Pipeline, error.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub trait OrStage<T> {
    fn or_io(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn or_pipeline(self, what: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrStage<T> for Result<T, E> {
    fn or_io(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::io(e.into().context(what())))
    }

    fn or_pipeline(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::pipeline(e.into().context(what.to_string())))
    }
}
