//! Word tokenization, WordPiece vocabulary training, and fixed-length encoding.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{clean_text, Corpus, MoodLabel};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const SPECIAL_TOKENS: [&str; 4] = [PAD, UNK, CLS, SEP];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// Prefix marking a piece that continues a word.
pub const CONTINUATION: &str = "##";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("invalid tokenizer config: {0}")]
    InvalidConfig(String),
    #[error("vocab_size {requested} cannot hold {needed} entries (4 specials plus the alphabet)")]
    VocabTooSmall { requested: usize, needed: usize },
    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary file line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TokenizerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub max_sequence_length: usize,
    pub vocab_size: usize,
    /// Lowercases Latin-script letters; other scripts pass through untouched.
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            max_sequence_length: 512,
            vocab_size: 8000,
            lowercase: true,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sequence_length < 8 {
            return Err(TokenizerError::InvalidConfig(format!(
                "max_sequence_length must be >= 8, got {}",
                self.max_sequence_length
            )));
        }
        if self.vocab_size < 8 {
            return Err(TokenizerError::InvalidConfig(format!(
                "vocab_size must be >= 8, got {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Token inventory with dense ids; the four specials occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
    max_token_chars: usize,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: format!("expected special token {special}"),
                });
            }
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: "empty token or token containing whitespace".into(),
                });
            }
            if id_of.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: format!("duplicate token {t}"),
                });
            }
        }
        let max_token_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(Self {
            tokens,
            id_of,
            max_token_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// File form: one token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file_str(&text)
    }

    /// SHA-256 of the vocabulary file bytes, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

/// Lowercases Latin-script characters only.
pub fn lowercase_latin(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_latin_letter(c) {
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Whitespace split of already-cleaned text.
pub fn word_tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Cleaning plus the configured case folding: the text every model sees.
pub fn normalize(raw: &str, config: &TokenizerConfig) -> String {
    let cleaned = clean_text(raw);
    if config.lowercase {
        lowercase_latin(&cleaned)
    } else {
        cleaned
    }
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION}{c}")
            }
        })
        .collect()
}

fn merge_symbols(left: &str, right: &str) -> String {
    let mut merged = String::with_capacity(left.len() + right.len());
    merged.push_str(left);
    merged.push_str(right.strip_prefix(CONTINUATION).unwrap_or(right));
    merged
}

/// Learns a WordPiece vocabulary from the corpus lyrics.
pub fn train_wordpiece(corpus: &Corpus, config: &TokenizerConfig) -> Result<Vocabulary> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for record in corpus {
        let text = normalize(&record.lyrics, config);
        for w in word_tokenize(&text) {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    train_wordpiece_from_counts(&counts, config.vocab_size)
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    pair: Reverse<(String, String)>,
    ids: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count.cmp(&other.count).then_with(|| self.pair.cmp(&other.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Frequency-greedy pair merging over word counts.
///
/// Starts from every character seen (word-initial form and `##` form), then
/// repeatedly merges the most frequent adjacent pair, ties broken by the
/// lexicographically smallest pair, until `vocab_size` entries exist or no
/// pair remains.
pub fn train_wordpiece_from_counts(counts: &BTreeMap<String, u64>, vocab_size: usize) -> Result<Vocabulary> {
    if counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let alphabet: BTreeSet<String> = counts.keys().flat_map(|w| initial_symbols(w)).collect();
    let needed = SPECIAL_TOKENS.len() + alphabet.len();
    if vocab_size < needed {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            needed,
        });
    }

    let mut symbols: Vec<String> = alphabet.iter().cloned().collect();
    let mut symbol_id: HashMap<String, u32> = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let mut vocab: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    vocab.extend(symbols.iter().cloned());
    let mut in_vocab: BTreeSet<String> = vocab.iter().cloned().collect();

    let mut words: Vec<(Vec<u32>, u64)> = counts
        .iter()
        .map(|(w, &c)| (initial_symbols(w).iter().map(|s| symbol_id[s]).collect(), c))
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut occurs_in: HashMap<(u32, u32), BTreeSet<usize>> = HashMap::new();
    for (wi, (syms, c)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            *pair_counts.entry((p[0], p[1])).or_default() += c;
            occurs_in.entry((p[0], p[1])).or_default().insert(wi);
        }
    }
    let candidate = |ids: (u32, u32), count: u64, symbols: &[String]| Candidate {
        count,
        pair: Reverse((symbols[ids.0 as usize].clone(), symbols[ids.1 as usize].clone())),
        ids,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts.iter().map(|(&ids, &c)| candidate(ids, c, &symbols)).collect();

    while vocab.len() < vocab_size {
        let Some(best) = heap.pop() else { break };
        let current = pair_counts.get(&best.ids).copied().unwrap_or(0);
        if current == 0 {
            continue;
        }
        if current != best.count {
            heap.push(candidate(best.ids, current, &symbols));
            continue;
        }
        let (left, right) = best.ids;
        let merged = merge_symbols(&symbols[left as usize], &symbols[right as usize]);
        let merged_id = *symbol_id.entry(merged.clone()).or_insert_with(|| {
            symbols.push(merged.clone());
            (symbols.len() - 1) as u32
        });
        if in_vocab.insert(merged.clone()) {
            vocab.push(merged);
        }

        let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
        let word_ids: Vec<usize> = occurs_in.remove(&best.ids).unwrap_or_default().into_iter().collect();
        for wi in word_ids {
            let (syms, c) = &mut words[wi];
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                if let Some(v) = pair_counts.get_mut(&key) {
                    *v -= *c;
                }
                touched.insert(key);
            }
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    next.push(merged_id);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            *syms = next;
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_default() += *c;
                occurs_in.entry(key).or_default().insert(wi);
                touched.insert(key);
            }
        }
        pair_counts.remove(&best.ids);
        for key in touched {
            if let Some(&c) = pair_counts.get(&key) {
                if c > 0 && key != best.ids {
                    heap.push(candidate(key, c, &symbols));
                }
            }
        }
    }
    Vocabulary::from_tokens(vocab)
}

/// Greedy longest-match-first segmentation of a single word.
///
/// Returns `[UNK]` for the whole word when any position cannot be matched.
pub fn wordpiece_segment(word: &str, vocab: &Vocabulary) -> Vec<String> {
    segment_ids(word, vocab)
        .into_iter()
        .map(|id| vocab.token(id).unwrap_or(UNK).to_string())
        .collect()
}

pub fn segment_ids(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain(std::iter::once(word.len())).collect();
    let n_chars = bounds.len() - 1;
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < n_chars {
        let mut end = n_chars.min(start + vocab.max_token_chars);
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![UNK_ID],
        }
    }
    pieces
}

/// Subword ids for a raw text, before specials and truncation.
pub fn subword_ids(text: &str, vocab: &Vocabulary, config: &TokenizerConfig) -> Vec<u32> {
    let normalized = normalize(text, config);
    word_tokenize(&normalized)
        .into_iter()
        .flat_map(|w| segment_ids(w, vocab))
        .collect()
}

/// A fixed-length model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub label: Option<MoodLabel>,
}

impl EncodedExample {
    /// Number of non-pad positions.
    pub fn active_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn check_invariants(&self, max_sequence_length: usize) -> std::result::Result<(), String> {
        if self.ids.len() != max_sequence_length || self.mask.len() != max_sequence_length {
            return Err(format!(
                "length ids={} mask={} expected {max_sequence_length}",
                self.ids.len(),
                self.mask.len()
            ));
        }
        if self.ids[0] != CLS_ID {
            return Err(format!("ids[0] = {} is not CLS", self.ids[0]));
        }
        for (i, (&id, &m)) in self.ids.iter().zip(&self.mask).enumerate() {
            let expected = u8::from(id != PAD_ID);
            if m != expected {
                return Err(format!("mask[{i}] = {m} but ids[{i}] = {id}"));
            }
        }
        let last = self.ids.iter().rposition(|&id| id != PAD_ID).unwrap();
        if self.ids[last] != SEP_ID {
            return Err(format!("last non-pad position {last} holds {} not SEP", self.ids[last]));
        }
        Ok(())
    }
}

/// clean, split, segment, truncate the tail, add `[CLS]`/`[SEP]`, pad.
pub fn encode(text: &str, vocab: &Vocabulary, config: &TokenizerConfig) -> EncodedExample {
    let max_len = config.max_sequence_length;
    let mut pieces = subword_ids(text, vocab, config);
    pieces.truncate(max_len.saturating_sub(2));
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend(pieces);
    ids.push(SEP_ID);
    let active = ids.len();
    ids.resize(max_len, PAD_ID);
    let mask = (0..max_len).map(|i| u8::from(i < active)).collect();
    EncodedExample { ids, mask, label: None }
}

pub fn encode_labeled(text: &str, label: MoodLabel, vocab: &Vocabulary, config: &TokenizerConfig) -> EncodedExample {
    EncodedExample {
        label: Some(label),
        ..encode(text, vocab, config)
    }
}

pub fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary, config: &TokenizerConfig) -> Vec<EncodedExample> {
    corpus
        .iter()
        .map(|r| encode_labeled(&r.lyrics, r.mood, vocab, config))
        .collect()
}
