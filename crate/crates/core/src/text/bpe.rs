//! Byte-level BPE.
//!
//! Ids 0..=255 are raw bytes, followed by PAD, CLS and UNUSED, then one id
//! per learned merge in merge order. Text is pre-split before every space so
//! merges never cross a word boundary; concatenating the token bytes always
//! reproduces the input exactly.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 256;
pub const CLS_ID: u32 = 257;
pub const UNUSED_ID: u32 = 258;
const FIRST_MERGE_ID: u32 = 259;
pub const CONTEXT_LENGTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    /// Number of leading non-PAD ids (CLS included).
    pub fn len_unpadded(&self) -> usize {
        self.ids.iter().position(|&i| i == PAD_ID).unwrap_or(self.ids.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    /// Byte string of every id; specials map to their literal names.
    vocab: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), u32>,
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    vocab: Vec<String>,
    merges: Vec<(u32, u32)>,
    specials: BTreeMap<String, u32>,
}

fn pre_split(text: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= text.len() {
            return None;
        }
        let mut i = start + 1;
        while i < text.len() && text[i] != b' ' {
            i += 1;
        }
        let chunk = &text[start..i];
        start = i;
        Some(chunk)
    })
}

impl BpeModel {
    fn base_vocab() -> Vec<Vec<u8>> {
        let mut v: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        v.push(b"<pad>".to_vec());
        v.push(b"<cls>".to_vec());
        v.push(b"<unused>".to_vec());
        v
    }

    fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self> {
        let mut vocab = Self::base_vocab();
        let mut ranks = HashMap::new();
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let n = vocab.len() as u32;
            if a >= n || b >= n || [a, b].iter().any(|&x| (PAD_ID..=UNUSED_ID).contains(&x)) {
                return Err(Error::Validation(format!("merge {rank} references invalid ids ({a}, {b})")));
            }
            let mut bytes = vocab[a as usize].clone();
            bytes.extend_from_slice(&vocab[b as usize]);
            vocab.push(bytes);
            ranks.insert((a, b), rank as u32);
        }
        Ok(BpeModel { vocab, merges, ranks })
    }

    /// Learns merges until the vocabulary holds `vocab_size` ids or no pair repeats.
    ///
    /// Each round merges the most frequent adjacent pair; ties go to the
    /// lexicographically smallest pair of byte strings.
    pub fn train(corpus: &[String], vocab_size: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Validation("BPE corpus is empty".into()));
        }
        if vocab_size < FIRST_MERGE_ID as usize {
            return Err(Error::Validation(format!(
                "vocab_size {vocab_size} must be at least {FIRST_MERGE_ID} (256 bytes + 3 specials)"
            )));
        }
        let mut word_counts: BTreeMap<&[u8], u64> = BTreeMap::new();
        for doc in corpus {
            for chunk in pre_split(doc.as_bytes()) {
                *word_counts.entry(chunk).or_default() += 1;
            }
        }
        let mut words: Vec<(Vec<u32>, u64)> = word_counts
            .into_iter()
            .map(|(w, c)| (w.iter().map(|&b| b as u32).collect(), c))
            .collect();
        let mut vocab = Self::base_vocab();
        let mut merges = Vec::new();
        while vocab.len() < vocab_size {
            let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
            for (syms, c) in &words {
                for p in syms.windows(2) {
                    *counts.entry((p[0], p[1])).or_default() += c;
                }
            }
            let best = counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&vocab[pa.0 as usize], &vocab[pa.1 as usize]);
                    let kb = (&vocab[pb.0 as usize], &vocab[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            });
            let Some(((a, b), _)) = best else { break };
            let new_id = vocab.len() as u32;
            let mut bytes = vocab[a as usize].clone();
            bytes.extend_from_slice(&vocab[b as usize]);
            vocab.push(bytes);
            merges.push((a, b));
            for (syms, _) in &mut words {
                merge_in_place(syms, (a, b), new_id);
            }
        }
        Self::from_merges(merges)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> &[u8] {
        &self.vocab[id as usize]
    }

    /// Token ids of `text` without specials, padding or truncation.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for chunk in pre_split(text.as_bytes()) {
            let mut syms: Vec<u32> = chunk.iter().map(|&b| b as u32).collect();
            loop {
                let best = syms
                    .windows(2)
                    .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|&r| (r, (p[0], p[1]))))
                    .min();
                let Some((rank, pair)) = best else { break };
                merge_in_place(&mut syms, pair, FIRST_MERGE_ID + rank);
            }
            out.extend(syms);
        }
        out
    }

    /// Bytes of all non-special ids, concatenated.
    pub fn decode_bytes(&self, ids: &[u32]) -> Vec<u8> {
        ids.iter()
            .filter(|&&i| !(PAD_ID..=UNUSED_ID).contains(&i))
            .flat_map(|&i| self.vocab[i as usize].iter().copied())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BpeFile {
            vocab: self.vocab.iter().map(hex::encode).collect(),
            merges: self.merges.clone(),
            specials: [("PAD", PAD_ID), ("CLS", CLS_ID), ("UNUSED", UNUSED_ID)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        };
        std::fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BpeFile = serde_json::from_str(&text)?;
        let model = Self::from_merges(file.merges)?;
        let stored: Vec<String> = model.vocab.iter().map(hex::encode).collect();
        if stored != file.vocab {
            return Err(Error::Validation(format!("{}: vocab does not match merges", path.display())));
        }
        Ok(model)
    }
}

fn merge_in_place(syms: &mut Vec<u32>, pair: (u32, u32), new_id: u32) {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    *syms = out;
}

/// `[CLS] + tokens`, truncated to `context_length` (head kept), then PAD-filled.
pub fn tokenize(text: &str, model: &BpeModel, context_length: usize) -> TokenSequence {
    let mut ids = Vec::with_capacity(context_length);
    ids.push(CLS_ID);
    ids.extend(model.encode(text));
    ids.truncate(context_length);
    ids.resize(context_length, PAD_ID);
    TokenSequence { ids }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force pair counter over raw bytes.
    fn most_frequent_pair(corpus: &[&str]) -> (u8, u8) {
        let mut best = ((0u8, 0u8), 0usize);
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                let n: usize = corpus
                    .iter()
                    .map(|s| s.as_bytes().windows(2).filter(|w| w[0] == a && w[1] == b).count())
                    .sum();
                if n > best.1 {
                    best = ((a, b), n);
                }
            }
        }
        best.0
    }

    #[test]
    fn first_merge_matches_brute_force() {
        let m = BpeModel::train(&["aaab".to_string()], 260).unwrap();
        let (a, b) = most_frequent_pair(&["aaab"]);
        assert_eq!((a, b), (b'a', b'a'));
        assert_eq!(m.merges(), &[(b'a' as u32, b'a' as u32)]);
        assert_eq!(m.vocab_size(), 260);
    }

    #[test]
    fn byte_vocab_has_no_merges() {
        let m = BpeModel::train(&["hello world".to_string()], 259).unwrap();
        assert!(m.merges().is_empty());
        assert!(BpeModel::train(&["x".to_string()], 258).is_err());
        assert!(BpeModel::train(&[], 300).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus: Vec<String> = (0..20).map(|i| format!("sex: M; age: {}; findings: clear lungs.", 40 + i)).collect();
        assert_eq!(BpeModel::train(&corpus, 320).unwrap(), BpeModel::train(&corpus, 320).unwrap());
    }

    #[test]
    fn tokenize_contracts() {
        let m = BpeModel::train(&["ab".to_string()], 259).unwrap();
        let t = tokenize("", &m, CONTEXT_LENGTH);
        assert_eq!(t.ids.len(), 512);
        assert_eq!(t.ids[0], CLS_ID);
        assert!(t.ids[1..].iter().all(|&i| i == PAD_ID));
        let t = tokenize("ab", &m, CONTEXT_LENGTH);
        assert_eq!(&t.ids[..4], &[CLS_ID, b'a' as u32, b'b' as u32, PAD_ID]);
        let long = "x".repeat(2000);
        let t = tokenize(&long, &m, CONTEXT_LENGTH);
        assert_eq!(t.ids.len(), 512);
        assert_eq!(t.ids[0], CLS_ID);
        assert_eq!(t.len_unpadded(), 512);
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = vec!["medications: Propofol, Fentanyl.".to_string(); 3];
        let m = BpeModel::train(&corpus, 300).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tok.json");
        m.save(&p).unwrap();
        assert_eq!(BpeModel::load(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn round_trip_and_length(text in "[ -~]{0,300}", extra in "[a-z ]{1,40}") {
            let corpus = vec![text.clone(), extra];
            let m = BpeModel::train(&corpus, 300).unwrap();
            let ids = m.encode(&text);
            prop_assert_eq!(m.decode_bytes(&ids), text.as_bytes().to_vec());
            let seq = tokenize(&text, &m, CONTEXT_LENGTH);
            prop_assert!(seq.ids.len() <= CONTEXT_LENGTH);
            if ids.len() < CONTEXT_LENGTH {
                prop_assert_eq!(m.decode_bytes(&seq.ids), text.as_bytes().to_vec());
            }
        }
    }
}
