use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a normalized prompt.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptDigest(String);

impl PromptDigest {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Digest of `prompt_text` after CRLF to LF conversion and stripping
/// trailing whitespace from every line.
pub fn normalize_digest(prompt_text: &str) -> PromptDigest {
    let unified = prompt_text.replace("\r\n", "\n");
    let normalized = unified
        .split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n");
    PromptDigest(hex::encode(Sha256::digest(normalized.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newline_and_trailing_space_insensitive() {
        assert_eq!(normalize_digest("a\r\nb"), normalize_digest("a\nb"));
        assert_eq!(normalize_digest("a \nb"), normalize_digest("a\nb"));
        assert_eq!(normalize_digest("a\t\r\nb  "), normalize_digest("a\nb"));
        assert_ne!(normalize_digest("a\nb"), normalize_digest("a\nc"));
        assert_ne!(normalize_digest(" a\nb"), normalize_digest("a\nb"));
    }

    #[test]
    fn known_value() {
        // sha256("abc")
        assert_eq!(
            normalize_digest("abc").as_str(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
