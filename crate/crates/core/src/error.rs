use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("teacher requires text view (document {id} has no text_features)")]
    MissingTextView { id: String },
    #[error("teacher mode requires text views; missing for: {}", .0.join(", "))]
    MissingTextViews(Vec<String>),
    #[error("degenerate embedding: zero norm{}", .0.as_ref().map(|id| alloc::format!(" ({id})")).unwrap_or_default())]
    DegenerateEmbedding(Option<String>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("non-finite loss in {stage} stage at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        stage: &'static str,
        epoch: usize,
        batch: usize,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension {
                context,
                expected,
                found,
            })
        }
    }
}
