use std::path::Path;

use crate::error::{Error, Result};

/// A text tokenized to character indices over its own byte vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    vocab: Vec<u8>,
    tokens: Vec<usize>,
}

impl Corpus {
    /// Carriage returns are dropped; `lowercase` folds ASCII case, which
    /// shrinks the vocabulary (and every input tile) by about a third.
    pub fn from_bytes(text: &[u8], lowercase: bool) -> Result<Self> {
        let bytes: Vec<u8> =
            text.iter().filter(|&&b| b != b'\r').map(|&b| if lowercase { b.to_ascii_lowercase() } else { b }).collect();
        if bytes.len() < 2 {
            return Err(Error::InvalidParam("corpus needs at least two characters".into()));
        }
        let mut seen = [false; 256];
        for &b in &bytes {
            seen[b as usize] = true;
        }
        let vocab: Vec<u8> = (0..=255u8).filter(|&b| seen[b as usize]).collect();
        let mut index = [0usize; 256];
        for (k, &b) in vocab.iter().enumerate() {
            index[b as usize] = k;
        }
        let tokens = bytes.iter().map(|&b| index[b as usize]).collect();
        Ok(Self { vocab, tokens })
    }

    pub fn from_path(path: &Path, lowercase: bool) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes, lowercase)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[u8] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn decode(&self, tokens: &[usize]) -> String {
        tokens.iter().map(|&t| self.vocab[t] as char).collect()
    }

    /// Keeps the first `n` tokens and the full vocabulary.
    pub fn truncated(&self, n: usize) -> Self {
        Self { vocab: self.vocab.clone(), tokens: self.tokens[..n.min(self.len())].to_vec() }
    }
}
