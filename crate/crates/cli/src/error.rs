//! Error categories and exit codes.

use std::fmt;

/// A configuration problem at a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            line: None,
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: Option<usize>) -> Self {
        if self.line.is_none() {
            self.line = line;
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if !self.path.is_empty() {
            write!(f, "{}: ", self.path)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Machine-readable failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Compute,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Compute => "compute",
        }
    }

    /// Process exit code; 2 is left to argument parsing.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 3,
            Category::Io => 4,
            Category::Compute => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn compute(e: impl fmt::Display) -> Self {
        Self {
            category: Category::Compute,
            message: e.to_string(),
        }
    }

    pub fn io(context: &str, e: impl fmt::Display) -> Self {
        Self {
            category: Category::Io,
            message: format!("{context}: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self {
            category: Category::Config,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.label(), self.message)
    }
}

impl std::error::Error for CliError {}
