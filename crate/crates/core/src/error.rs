use thiserror::Error;

use crate::model::{ElementType, LinkType};

pub type Result<T, E = KbError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Each variant maps to exactly one stable machine code (see [`KbError::code`]);
/// the codes are part of the HTTP and CLI compatibility contract.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("unknown actor '{0}'")]
    UnknownActor(String),
    #[error("{kind} '{id}' not found")]
    NotFound { kind: &'static str, id: String },
    #[error("unknown ontology tag '{0}'")]
    UnknownTag(String),
    #[error("unknown parent ontology item '{0}'")]
    UnknownParent(String),
    #[error("a sibling ontology item is already labelled '{0}'")]
    DuplicateSiblingLabel(String),
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("title must not be empty")]
    EmptyTitle,
    #[error("sections do not match the {element_type} template: {message}")]
    TemplateViolation {
        element_type: ElementType,
        message: String,
    },
    #[error("element '{0}' is already validated")]
    AlreadyValidated(String),
    #[error("link {source_type} -{link_type}-> {target_type} is not allowed by the schema")]
    SchemaViolation {
        source_type: ElementType,
        link_type: LinkType,
        target_type: ElementType,
    },
    #[error("an active {link_type} link from '{source_id}' to '{target_id}' already exists")]
    DuplicateLink {
        source_id: String,
        target_id: String,
        link_type: LinkType,
    },
    #[error("link '{0}' has already been decided")]
    AlreadyDecided(String),
    #[error("element '{id}' has type {actual}, expected {expected}")]
    WrongType {
        id: String,
        expected: String,
        actual: ElementType,
    },
    #[error("illegal transition for '{fait}': {message}")]
    IllegalTransition { fait: String, message: String },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("duplicate document id '{0}'")]
    DuplicateDocId(String),
    #[error("record '{0}' conflicts with existing content")]
    Conflict(String),
    #[error("unknown reference '{0}'")]
    UnknownReference(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unsupported version: {0}")]
    VersionMismatch(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("injected fault after {0} mutation steps")]
    InjectedFault(usize),
}

impl KbError {
    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        KbError::NotFound {
            kind,
            id: id.into(),
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            KbError::PermissionDenied(_) => "PERMISSION_DENIED",
            KbError::UnknownActor(_) => "UNKNOWN_ACTOR",
            KbError::NotFound { .. } => "NOT_FOUND",
            KbError::UnknownTag(_) => "UNKNOWN_TAG",
            KbError::UnknownParent(_) => "UNKNOWN_PARENT",
            KbError::DuplicateSiblingLabel(_) => "DUPLICATE_SIBLING_LABEL",
            KbError::EmptyLabel => "EMPTY_LABEL",
            KbError::EmptyTitle => "EMPTY_TITLE",
            KbError::TemplateViolation { .. } => "TEMPLATE_VIOLATION",
            KbError::AlreadyValidated(_) => "ALREADY_VALIDATED",
            KbError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            KbError::DuplicateLink { .. } => "DUPLICATE_LINK",
            KbError::AlreadyDecided(_) => "ALREADY_DECIDED",
            KbError::WrongType { .. } => "WRONG_TYPE",
            KbError::IllegalTransition { .. } => "ILLEGAL_TRANSITION",
            KbError::InvalidWeights(_) => "INVALID_WEIGHTS",
            KbError::InvalidArgument(_) => "INVALID_ARGUMENT",
            KbError::DuplicateDocId(_) => "DUPLICATE_DOC_ID",
            KbError::Conflict(_) => "CONFLICT",
            KbError::UnknownReference(_) => "UNKNOWN_REFERENCE",
            KbError::Malformed(_) => "MALFORMED",
            KbError::VersionMismatch(_) => "VERSION_MISMATCH",
            KbError::Io(_) => "IO_FAILURE",
            KbError::Config(_) => "CONFIG_ERROR",
            KbError::InjectedFault(_) => "INJECTED_FAULT",
        }
    }

    /// Every code the engine can emit, in declaration order.
    pub const ALL_CODES: &'static [&'static str] = &[
        "PERMISSION_DENIED",
        "UNKNOWN_ACTOR",
        "NOT_FOUND",
        "UNKNOWN_TAG",
        "UNKNOWN_PARENT",
        "DUPLICATE_SIBLING_LABEL",
        "EMPTY_LABEL",
        "EMPTY_TITLE",
        "TEMPLATE_VIOLATION",
        "ALREADY_VALIDATED",
        "SCHEMA_VIOLATION",
        "DUPLICATE_LINK",
        "ALREADY_DECIDED",
        "WRONG_TYPE",
        "ILLEGAL_TRANSITION",
        "INVALID_WEIGHTS",
        "INVALID_ARGUMENT",
        "DUPLICATE_DOC_ID",
        "CONFLICT",
        "UNKNOWN_REFERENCE",
        "MALFORMED",
        "VERSION_MISMATCH",
        "IO_FAILURE",
        "CONFIG_ERROR",
        "INJECTED_FAULT",
    ];
}

impl From<std::io::Error> for KbError {
    fn from(err: std::io::Error) -> Self {
        KbError::Io(err.to_string())
    }
}
