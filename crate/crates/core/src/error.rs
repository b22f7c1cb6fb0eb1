use thiserror::Error;

/// Errors from the message algebra: list helpers, constructors and the fact parser.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("candidate {0} does not occur in the list")]
    NotFound(String),
    #[error("index {0} is out of range for the list")]
    OutOfRange(usize),
    #[error("nested encryption is not representable: {0}")]
    Nesting(String),
    #[error("ill-shaped fact: {0}")]
    Shape(String),
    #[error("cannot parse '{input}' at offset {offset}: {message}")]
    Parse {
        input: String,
        offset: usize,
        message: String,
    },
}

/// Errors raised while evaluating process terms.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("no definition for process name '{0}'")]
    DefinitionMissing(String),
    #[error("bad arguments for '{name}': {message}")]
    BadArguments { name: String, message: String },
    #[error("wiring error: {0}")]
    Wiring(String),
    #[error("unguarded recursion through '{0}'")]
    Unguarded(String),
    #[error("trace oracle exceeded its cap of {0} nodes")]
    OracleOverflow(usize),
    #[error("oracle depth {depth} exceeds the configured bound {bound}")]
    OracleDepth { depth: usize, bound: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A rejected scenario or command-line configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", render_config_error(.key, .line, .message))]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

fn render_config_error(key: &Option<String>, line: &Option<usize>, message: &str) -> String {
    match (key, line) {
        (Some(k), Some(l)) => format!("configuration error at line {l}, key '{k}': {message}"),
        (Some(k), None) => format!("configuration error in '{k}': {message}"),
        (None, Some(l)) => format!("configuration error at line {l}: {message}"),
        (None, None) => format!("configuration error: {message}"),
    }
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            key: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn for_key(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
