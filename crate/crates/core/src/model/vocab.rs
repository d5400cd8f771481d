//! Word-level vocabulary: special tokens, the template word bank, and every
//! entity surface, each a single token.

use std::collections::HashMap;
use std::path::Path;

use crate::synthkb::{templates, FactRecord};

use super::{ModelError, Result};

pub const ANS: &str = "ANS:";
pub const EOA: &str = "<eoa>";

/// Token table. Index is the token id; specials sit at fixed positions.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds the vocabulary for a knowledge base: `[ANS:, <eoa>]`, the
    /// sorted template word bank, then entities in KB order.
    pub fn build(kb: &[FactRecord]) -> Vocab {
        let mut tokens: Vec<String> = vec![ANS.to_string(), EOA.to_string()];
        tokens.extend(templates::word_bank());
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for f in kb {
            for e in [&f.subject, &f.object] {
                if seen.insert(e.surface.as_str() as &str, ()).is_none() {
                    tokens.push(e.surface.clone());
                }
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ans_id(&self) -> u32 {
        0
    }

    pub fn eoa_id(&self) -> u32 {
        1
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| ModelError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokenize(&self, words: &[String]) -> Result<Vec<u32>> {
        words.iter().map(|w| self.id(w)).collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Writes `vocab.json`: a JSON array where index is the token id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(&self.tokens)?;
        buf.push(b'\n');
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let tokens: Vec<String> = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok(Self::from_tokens(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkb::generate_kb;

    #[test]
    fn specials_have_fixed_ids() {
        let kb = generate_kb(1, 2, 3).unwrap();
        let v = Vocab::build(&kb);
        assert_eq!(v.id(ANS).unwrap(), v.ans_id());
        assert_eq!(v.id(EOA).unwrap(), v.eoa_id());
    }

    #[test]
    fn every_entity_is_one_token() {
        let kb = generate_kb(5, 4, 10).unwrap();
        let v = Vocab::build(&kb);
        for f in &kb {
            assert!(v.id(&f.subject.surface).is_ok());
            assert!(v.id(&f.object.surface).is_ok());
        }
    }

    #[test]
    fn unknown_token_is_error() {
        let kb = generate_kb(1, 2, 3).unwrap();
        let v = Vocab::build(&kb);
        assert!(matches!(v.id("nonexistentword"), Err(ModelError::UnknownToken(_))));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let kb = generate_kb(2, 3, 4).unwrap();
        let v = Vocab::build(&kb);
        let p = dir.path().join("vocab.json");
        v.save(&p).unwrap();
        let back = Vocab::load(&p).unwrap();
        assert_eq!(back.len(), v.len());
        assert_eq!(back.id(&kb[0].subject.surface).unwrap(), v.id(&kb[0].subject.surface).unwrap());
    }

    #[test]
    fn default_kb_vocab_is_about_5000() {
        let kb = generate_kb(42, 27, 150).unwrap();
        let v = Vocab::build(&kb);
        assert!((4500..=5200).contains(&v.len()), "vocab size {}", v.len());
    }
}
