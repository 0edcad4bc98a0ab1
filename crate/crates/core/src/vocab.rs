//! Token id <-> text maps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot tokenize text at byte {offset}: {rest:?}")]
pub struct TokenizeError {
    pub offset: usize,
    pub rest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tokens", rename_all = "snake_case")]
pub enum Vocab {
    /// One token per byte.
    ByteLevel,
    /// One string per id; encoding is greedy longest match.
    Table(Vec<String>),
}

impl Vocab {
    pub fn len(&self) -> usize {
        match self {
            Vocab::ByteLevel => 256,
            Vocab::Table(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizeError> {
        match self {
            Vocab::ByteLevel => Ok(text.bytes().map(u32::from).collect()),
            Vocab::Table(table) => {
                let mut out = Vec::new();
                let mut i = 0;
                while i < text.len() {
                    let rest = &text[i..];
                    let best = table
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| !t.is_empty() && rest.starts_with(t.as_str()))
                        .max_by_key(|(id, t)| (t.len(), std::cmp::Reverse(*id)));
                    match best {
                        Some((id, t)) => {
                            out.push(id as u32);
                            i += t.len();
                        }
                        None => return Err(TokenizeError { offset: i, rest: rest.chars().take(16).collect() }),
                    }
                }
                Ok(out)
            }
        }
    }

    /// Unknown ids decode to U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> String {
        match self {
            Vocab::ByteLevel => {
                let bytes: Vec<u8> = ids.iter().map(|&i| u8::try_from(i).unwrap_or(b'?')).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            Vocab::Table(table) => ids.iter().map(|&i| table.get(i as usize).map_or("\u{fffd}", String::as_str)).collect(),
        }
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        match self {
            Vocab::ByteLevel => (token.len() == 1).then(|| token.as_bytes()[0] as u32),
            Vocab::Table(t) => t.iter().position(|s| s == token).map(|p| p as u32),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_greedy() {
        let v = Vocab::Table(vec!["a".into(), "ab".into(), "b".into(), " ".into()]);
        assert_eq!(v.encode("ab a b").unwrap(), vec![1, 3, 0, 3, 2]);
        assert_eq!(v.decode(&[1, 3, 2]), "ab b");
        assert_eq!(v.encode("abc").unwrap_err().offset, 2);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(s in "\\PC{0,40}") {
            let v = Vocab::ByteLevel;
            prop_assert_eq!(v.decode(&v.encode(&s).unwrap()), s);
        }
    }
}
