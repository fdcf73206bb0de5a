//! Closed integer-indexed token vocabulary with a reserved UNK slot.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Builds the vocabulary from a token stream: UNK at index 0,
    /// then the distinct tokens in sorted order. Sorting makes the
    /// mapping independent of corpus order.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut distinct: Vec<&str> = tokens
            .into_iter()
            .filter(|t| *t != UNK_TOKEN)
            .collect();
        distinct.sort_unstable();
        distinct.dedup();

        let mut list = Vec::with_capacity(distinct.len() + 1);
        list.push(String::from(UNK_TOKEN));
        list.extend(distinct.iter().map(|t| String::from(*t)));
        let index = list
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            tokens: list,
            index,
        }
    }

    /// Rebuilds from an already-ordered token list (checkpoint load).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(CoreError::format("vocabulary must start with the UNK token"));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::format(alloc::format!("duplicate token {t}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Token id, falling back to UNK for unknown tokens.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| CoreError::Input(alloc::format!("token id {id} out of range")))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // UNK always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_sorts_and_dedups_with_unk_first() {
        let v = Vocab::build(["b", "a", "b", "c"]);
        assert_eq!(v.tokens(), &["<unk>", "a", "b", "c"]);
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.token(2).unwrap(), "b");
        assert!(v.token(4).is_err());
    }

    #[test]
    fn order_independent() {
        let a = Vocab::build(["x", "y", "z"]);
        let b = Vocab::build(["z", "x", "y", "x"]);
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_through_token_list() {
        let v = Vocab::build(["m", "n"]);
        let back = Vocab::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(v, back);
        assert!(Vocab::from_tokens(alloc::vec![String::from("a")]).is_err());
    }
}
