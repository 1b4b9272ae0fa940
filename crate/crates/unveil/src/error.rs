use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format: {}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] unveil_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status for this error. See `unveil --help`.
    pub fn exit_code(&self) -> i32 {
        use unveil_core::Error as C;
        match self {
            Error::Config(_) | Error::Core(C::Config(_)) => 2,
            Error::Io { .. } => 3,
            Error::Format { .. } | Error::Core(C::Data(_) | C::MissingTextView { .. } | C::MissingTextViews(_) | C::EmptyCorpus) => 4,
            Error::Core(C::Dimension { .. }) => 5,
            Error::Core(C::NonFinite(_) | C::NonFiniteLoss { .. } | C::DegenerateEmbedding(_)) => 6,
            Error::Core(C::Contract(_)) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_class() {
        let io = Error::io(Path::new("x"), std::io::Error::from(std::io::ErrorKind::NotFound));
        let codes = [
            Error::Config("k".into()).exit_code(),
            io.exit_code(),
            Error::format(Path::new("x"), 1, "bad").exit_code(),
            Error::Core(unveil_core::Error::Dimension {
                context: "q",
                expected: 1,
                found: 2,
            })
            .exit_code(),
            Error::Core(unveil_core::Error::NonFiniteLoss {
                stage: "distill",
                epoch: 0,
                batch: 3,
            })
            .exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 6]);
    }

    #[test]
    fn messages_are_single_line() {
        let e = Error::format(Path::new("corpus.jsonl"), 7, "missing field `id`");
        assert_eq!(e.to_string(), "format: corpus.jsonl:7: missing field `id`");
    }
}
