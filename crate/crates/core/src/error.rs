use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },
    #[error("empty key set")]
    EmptyKeySet,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite loss in term `{term}`")]
    NonFiniteLoss { term: String },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown view id {0}")]
    UnknownView(usize),
    #[error("label out of range for {head}: {value} (classes: {classes})")]
    LabelOutOfRange {
        head: &'static str,
        value: usize,
        classes: usize,
    },
    #[error("sigma must be strictly positive")]
    NonPositiveSigma,
    #[error("geometric evaluation unavailable: variant `{0}` has no pose head")]
    NoPoseHead(String),
    #[error("variant `{0}` is not trainable")]
    NotTrainable(String),
    #[error("variant `{variant}` has no injection pathway for `{intervention}`")]
    NoInjectionPathway {
        variant: String,
        intervention: String,
    },
    #[error("trace has no learned gate (gate was clamped or overridden)")]
    NoLearnedGate,
    #[error("invalid intervention: {0}")]
    Intervention(String),
    #[error("unknown clip id `{0}`")]
    UnknownClip(String),
    #[error("training diverged at epoch {epoch}: non-finite `{term}`")]
    Diverged { epoch: usize, term: String },
}
