//! Error taxonomy shared by every module.
//!
//! Two broad classes matter downstream: *input/usage* errors (bad shapes, bad
//! arguments, malformed files) and *numeric* failures (non-finite values,
//! diverging optimizers). The CLI maps the former to exit code 2 and the
//! latter to exit code 3.

/// Unified error type for the whole crate.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// Dimension disagreement between tensors, nets, or images.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument in {context}: {message}")]
    InvalidArgument {
        context: &'static str,
        message: String,
    },

    /// A segmentation label is outside the palette.
    #[error("label {label} exceeds palette size {palette_len}")]
    LabelOverflow { label: u32, palette_len: usize },

    /// A computation produced NaN or infinity.
    #[error("non-finite value in {context}{}", fmt_step(.step))]
    NonFinite {
        context: &'static str,
        step: Option<usize>,
    },

    /// An optimizer or solver failed numerically (e.g. diverging loss).
    #[error("numeric failure in {context}: {message}")]
    Numeric {
        context: &'static str,
        message: String,
    },

    /// A binary or structured file did not parse; `offset` is the byte
    /// position of the first offending field.
    #[error("{path}: malformed {format} at byte {offset}: {message}")]
    MalformedFile {
        path: String,
        format: &'static str,
        offset: usize,
        message: String,
    },

    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure, annotated with the path involved.
    #[error("{path}: {message}")]
    Json { path: String, message: String },

    /// Rejected run configuration.
    #[error("config error: {0}")]
    Config(String),
}

fn fmt_step(step: &Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl CoreError {
    /// True for failures that indicate broken numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::NonFinite { .. } | CoreError::Numeric { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

/// Rejects non-finite slices with a [`CoreError::NonFinite`].
pub fn ensure_finite(values: &[f64], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            context,
            step: None,
        })
    }
}
