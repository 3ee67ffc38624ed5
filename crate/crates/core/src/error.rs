use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// The variants map onto the CLI exit codes: configuration problems exit with
/// 2, data problems with 3, and everything that goes wrong during estimation
/// or inference with 4.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CgemError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: {found} rows, at least {required} required")]
    InsufficientData { found: usize, required: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("extrapolation error: no training weight near z = {z:?}")]
    Extrapolation { z: Vec<f64> },

    #[error("degenerate density at z = {z:?}: every raw value is at or below the floor")]
    DegenerateDensity { z: Vec<f64> },

    #[error("inference error: {0}")]
    Inference(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CgemError>,
    },
}

impl CgemError {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        CgemError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage tags peeled off.
    pub fn root(&self) -> &CgemError {
        match self {
            CgemError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.root() {
            CgemError::Config(_) | CgemError::Parameter(_) | CgemError::Io(_) => 2,
            CgemError::Cell { .. } | CgemError::Data(_) | CgemError::InsufficientData { .. } => 3,
            _ => 4,
        }
    }
}

impl From<std::io::Error> for CgemError {
    fn from(e: std::io::Error) -> Self {
        CgemError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CgemError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_tags_keep_exit_code() {
        let e = CgemError::Extrapolation { z: vec![9.0] }
            .at("kcde")
            .at("entropy");
        assert_eq!(e.exit_code(), 4);
        assert!(matches!(e.root(), CgemError::Extrapolation { .. }));
        assert!(e.to_string().starts_with("entropy: kcde:"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CgemError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CgemError::InsufficientData {
                found: 3,
                required: 20
            }
            .exit_code(),
            3
        );
        assert_eq!(CgemError::Inference("x".into()).exit_code(), 4);
    }
}
