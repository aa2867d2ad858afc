use std::path::PathBuf;

use crate::error::{Error, Result};

/// One manifest record: `path subject pose`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
    pub pose: String,
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Whitespace-separated `path subject pose` per line; `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::ManifestParse {
                line: i + 1,
                message: format!("expected `path subject pose`, found {} fields", fields.len()),
            });
        }
        entries.push(ManifestEntry {
            path: PathBuf::from(fields[0]),
            subject: fields[1].to_string(),
            pose: fields[2].to_string(),
        });
    }
    Ok(entries)
}

/// Whitespace-separated vertex indices; `#` starts a comment.
pub fn parse_mask(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        for token in strip_comment(raw).split_whitespace() {
            out.push(token.parse().map_err(|_| Error::ManifestParse {
                line: i + 1,
                message: format!("`{token}` is not a vertex index"),
            })?);
        }
    }
    Ok(out)
}
