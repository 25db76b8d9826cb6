//! Line-oriented parsing helpers shared by the plain-text file formats.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Yields `(1-based line number, trimmed content)` for lines that are
/// neither blank nor `#` comments.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses exactly `n` whitespace-separated floats from a line.
pub fn parse_floats(line_no: usize, line: &str, n: usize) -> Result<Vec<f64>, ParseError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != n {
        return Err(ParseError::new(
            line_no,
            format!("expected {n} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| ParseError::new(line_no, format!("invalid number `{f}`")))
        })
        .collect()
}
