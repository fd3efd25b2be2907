use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;

/// Reserved marker strings, in id order. They occupy ids `0..RESERVED.len()`.
pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Closed whitespace vocabulary with a fixed reserved block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens. The first token gets id
    /// `RESERVED.len()`.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for reserved in RESERVED {
            vocab.push(reserved.to_string())?;
        }
        for token in tokens {
            vocab.push(token.into())?;
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) -> Result<()> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!(
                "vocabulary token {token:?} is empty or contains whitespace"
            )));
        }
        let id = self.tokens.len() as TokenId;
        if self.token_to_id.insert(token.clone(), id).is_some() {
            return Err(Error::Config(format!("duplicate vocabulary token {token:?}")));
        }
        self.tokens.push(token);
        Ok(())
    }

    /// Reads one token per line; line `n` becomes id `RESERVED.len() + n`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("invalid vocabulary entry {line:?}"),
                });
            }
            tokens.push(line.to_string());
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for token in &self.tokens[RESERVED.len()..] {
            out.push_str(token);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Hex SHA-256 over the token list, used to pair checkpoints with vocabularies.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Whitespace tokenization against a closed vocabulary. Never fails; unknown
/// words map to [`UNK`]. Sequence markers are not added here.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    text.split_whitespace().map(|w| vocab.id(w)).collect()
}
