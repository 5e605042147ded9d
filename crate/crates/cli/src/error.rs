use std::path::Path;

use semsel::harness::HarnessError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input files.
    #[error("{0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::NonFinite(_) => 3,
        }
    }

    /// Prefixes `path`, turning a leading `line N: ` into `path:N: `.
    pub fn in_file(path: &Path, err: impl std::fmt::Display) -> Self {
        let msg = err.to_string();
        let located = msg.strip_prefix("line ").and_then(|rest| {
            let (n, tail) = rest.split_once(": ")?;
            n.parse::<usize>().ok().map(|n| format!("{}:{n}: {tail}", path.display()))
        });
        CliError::Input(located.unwrap_or_else(|| format!("{}: {msg}", path.display())))
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_non_finite() {
            CliError::NonFinite(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_line_prefix() {
        let e = CliError::in_file(Path::new("a/corpus.amr"), "line 12: block is missing `# ::id`");
        assert_eq!(e.to_string(), "a/corpus.amr:12: block is missing `# ::id`");
        let e = CliError::in_file(Path::new("x.json"), "expected value");
        assert_eq!(e.to_string(), "x.json: expected value");
        assert_eq!(e.exit_code(), 2);
    }
}
