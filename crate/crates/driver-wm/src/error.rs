use std::path::{Path, PathBuf};

use driver_wm_core::Error as CoreError;

/// Decoding failures of the binary and text formats.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated payload: {what} needs {needed} bytes, {available} left")]
    Truncated {
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("header inconsistency: {0}")]
    Header(String),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 data or format, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(e) => match e {
                CoreError::InvalidConfig(_)
                | CoreError::NotTrainable(_)
                | CoreError::NoPoseHead(_)
                | CoreError::NoInjectionPathway { .. }
                | CoreError::NoLearnedGate
                | CoreError::Intervention(_)
                | CoreError::UnknownView(_) => 1,
                _ => 2,
            },
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Verification(_) => 3,
        }
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
