//! Classical baselines: TF-IDF features and multinomial Naive Bayes.
//!
//! Both work on the same word stream as the analytics module: cleaned text,
//! Latin letters lowercased, split on whitespace. Naive Bayes consumes raw
//! counts; TF-IDF vectors serve reporting and a nearest-centroid probe.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{clean_text, Corpus, MoodLabel};
use crate::tokenizer::{lowercase_latin, word_tokenize};

pub const NB_FORMAT: &str = "moodlyrics-nb v1";
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("class {0} has no training documents")]
    MissingClass(MoodLabel),
    #[error("smoothing alpha must be a finite value > 0, got {0}")]
    InvalidAlpha(f64),
    #[error("malformed model file at line {line}: {reason}")]
    BadModelFile { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// The word stream both baselines see.
pub fn text_tokens(text: &str) -> Vec<String> {
    word_tokenize(&lowercase_latin(&clean_text(text)))
        .into_iter()
        .map(String::from)
        .collect()
}

fn count_words<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    counts
}

/// Sparse vector: `(column, weight)` pairs sorted by column, zeros omitted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn get(&self, column: usize) -> f64 {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    /// Word → dense column index (columns follow sorted word order).
    pub vocabulary: BTreeMap<String, usize>,
    /// `ln((1+N)/(1+df)) + 1` per column.
    pub idf: Vec<f64>,
    pub num_docs: usize,
}

pub fn tfidf_fit(corpus: &Corpus) -> Result<TfidfModel> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|r| text_tokens(&r.lyrics)).collect();
    tfidf_fit_docs(&docs)
}

pub fn tfidf_fit_docs<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<TfidfModel> {
    if docs.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        for word in count_words(doc).into_keys() {
            *df.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    let n = docs.len() as f64;
    let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    let vocabulary = df.into_keys().enumerate().map(|(i, w)| (w, i)).collect();
    Ok(TfidfModel {
        vocabulary,
        idf,
        num_docs: docs.len(),
    })
}

impl TfidfModel {
    pub fn idf_of(&self, word: &str) -> Option<f64> {
        self.vocabulary.get(word).map(|&c| self.idf[c])
    }

    /// Raw term count × idf; words outside the vocabulary are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        self.transform_tokens(&text_tokens(text))
    }

    pub fn transform_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut entries: Vec<(usize, f64)> = count_words(tokens)
            .into_iter()
            .filter_map(|(w, tf)| self.vocabulary.get(w).map(|&c| (c, tf as f64 * self.idf[c])))
            .collect();
        entries.sort_by_key(|&(c, _)| c);
        SparseVector { entries }
    }
}

/// Nearest-centroid classifier over TF-IDF vectors (cosine similarity).
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidProbe {
    pub tfidf: TfidfModel,
    /// Dense mean vector per class; all zeros for a class without documents.
    pub centroids: Vec<Vec<f64>>,
}

impl CentroidProbe {
    pub fn fit(corpus: &Corpus) -> Result<Self> {
        let tfidf = tfidf_fit(corpus)?;
        let width = tfidf.vocabulary.len();
        let mut centroids = vec![vec![0.0; width]; MoodLabel::COUNT];
        let mut counts = [0usize; MoodLabel::COUNT];
        for r in corpus.iter() {
            let c = r.mood.index();
            counts[c] += 1;
            for (col, w) in tfidf.transform(&r.lyrics).entries {
                centroids[c][col] += w;
            }
        }
        for (centroid, &n) in centroids.iter_mut().zip(&counts) {
            if n > 0 {
                centroid.iter_mut().for_each(|x| *x /= n as f64);
            }
        }
        Ok(Self { tfidf, centroids })
    }

    /// Class with the highest cosine similarity; ties to the lowest index.
    pub fn predict(&self, text: &str) -> (MoodLabel, Vec<f64>) {
        let v = self.tfidf.transform(text);
        let vn = v.norm();
        let sims: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| {
                let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                if vn == 0.0 || cn == 0.0 {
                    0.0
                } else {
                    v.entries.iter().map(|&(col, w)| w * c[col]).sum::<f64>() / (vn * cn)
                }
            })
            .collect();
        (argmax_low(&sims), sims)
    }
}

fn argmax_low(v: &[f64]) -> MoodLabel {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    MoodLabel::from_index(best).expect("four classes")
}

/// Multinomial Naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub alpha: f64,
    pub log_priors: [f64; MoodLabel::COUNT],
    /// Word → `ln P(word | class)` per class.
    pub log_likelihoods: BTreeMap<String, [f64; MoodLabel::COUNT]>,
}

pub fn nb_train(corpus: &Corpus, alpha: f64) -> Result<NaiveBayesModel> {
    let docs: Vec<(Vec<String>, MoodLabel)> = corpus.iter().map(|r| (text_tokens(&r.lyrics), r.mood)).collect();
    nb_train_docs(&docs, alpha)
}

/// Trains on pre-tokenized documents.
pub fn nb_train_docs<S: AsRef<str>>(docs: &[(Vec<S>, MoodLabel)], alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(BaselineError::InvalidAlpha(alpha));
    }
    if docs.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut doc_counts = [0usize; MoodLabel::COUNT];
    let mut totals = [0usize; MoodLabel::COUNT];
    let mut counts: BTreeMap<String, [usize; MoodLabel::COUNT]> = BTreeMap::new();
    for (tokens, label) in docs {
        let c = label.index();
        doc_counts[c] += 1;
        for t in tokens {
            counts.entry(t.as_ref().to_string()).or_insert([0; MoodLabel::COUNT])[c] += 1;
            totals[c] += 1;
        }
    }
    if let Some(missing) = MoodLabel::ALL.into_iter().find(|m| doc_counts[m.index()] == 0) {
        return Err(BaselineError::MissingClass(missing));
    }
    let n = docs.len() as f64;
    let v = counts.len() as f64;
    let log_priors = doc_counts.map(|d| (d as f64 / n).ln());
    let log_likelihoods = counts
        .into_iter()
        .map(|(w, per_class)| {
            let mut ll = [0.0; MoodLabel::COUNT];
            for c in 0..MoodLabel::COUNT {
                ll[c] = ((per_class[c] as f64 + alpha) / (totals[c] as f64 + alpha * v)).ln();
            }
            (w, ll)
        })
        .collect();
    Ok(NaiveBayesModel {
        alpha,
        log_priors,
        log_likelihoods,
    })
}

/// Predicted class and the posterior over all four classes.
pub fn nb_predict(model: &NaiveBayesModel, text: &str) -> (MoodLabel, Vec<f64>) {
    model.predict_tokens(&text_tokens(text))
}

impl NaiveBayesModel {
    /// `log prior + Σ log likelihood` per class; unseen words are skipped.
    pub fn log_scores<S: AsRef<str>>(&self, tokens: &[S]) -> [f64; MoodLabel::COUNT] {
        let mut scores = self.log_priors;
        for t in tokens {
            if let Some(ll) = self.log_likelihoods.get(t.as_ref()) {
                for (s, l) in scores.iter_mut().zip(ll) {
                    *s += l;
                }
            }
        }
        scores
    }

    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> (MoodLabel, Vec<f64>) {
        let scores = self.log_scores(tokens);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        (argmax_low(&scores), exps.into_iter().map(|e| e / sum).collect())
    }

    pub fn vocabulary_size(&self) -> usize {
        self.log_likelihoods.len()
    }

    /// Versioned text form. Floats use shortest round-trip formatting, so
    /// reloading reproduces every value bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{NB_FORMAT}");
        let _ = writeln!(out, "alpha\t{:?}", self.alpha);
        let _ = writeln!(out, "words\t{}", self.log_likelihoods.len());
        for m in MoodLabel::ALL {
            let _ = writeln!(out, "prior\t{}\t{:?}", m.as_str(), self.log_priors[m.index()]);
        }
        for (w, ll) in &self.log_likelihoods {
            let _ = writeln!(out, "{w}\t{:?}\t{:?}\t{:?}\t{:?}", ll[0], ll[1], ll[2], ll[3]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| BaselineError::BadModelFile {
            line,
            reason: reason.to_string(),
        };
        let float = |line: usize, s: &str| s.parse::<f64>().map_err(|_| bad(line, "invalid number"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, NB_FORMAT)) => {}
            _ => return Err(bad(1, "missing format header")),
        }
        let mut field = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "unexpected end of file"))?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts[0] != key {
                return Err(bad(n, &format!("expected `{key}`")));
            }
            Ok((n, parts[1..].to_vec()))
        };
        let (n, a) = field("alpha")?;
        let alpha = float(n, a.first().copied().unwrap_or(""))?;
        let (n, w) = field("words")?;
        let words: usize = w.first().and_then(|s| s.parse().ok()).ok_or_else(|| bad(n, "invalid word count"))?;
        let mut log_priors = [0.0; MoodLabel::COUNT];
        for m in MoodLabel::ALL {
            let (n, p) = field("prior")?;
            if p.len() != 2 || p[0] != m.as_str() {
                return Err(bad(n, "priors must list every mood in label order"));
            }
            log_priors[m.index()] = float(n, p[1])?;
        }
        let mut log_likelihoods = BTreeMap::new();
        for (n, line) in lines {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 1 + MoodLabel::COUNT || parts[0].is_empty() {
                return Err(bad(n, "expected a word and four log-likelihoods"));
            }
            let mut ll = [0.0; MoodLabel::COUNT];
            for (slot, s) in ll.iter_mut().zip(&parts[1..]) {
                *slot = float(n, s)?;
            }
            if log_likelihoods.insert(parts[0].to_string(), ll).is_some() {
                return Err(bad(n, "duplicate word"));
            }
        }
        if log_likelihoods.len() != words {
            return Err(bad(0, "word count does not match header"));
        }
        Ok(Self {
            alpha,
            log_priors,
            log_likelihoods,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}
