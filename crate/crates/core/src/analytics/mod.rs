//! Corpus statistics: frequency tables, type-token ratio, lexical density.

pub mod plot;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{clean_text, Corpus, SongRecord};
use crate::tokenizer::word_tokenize;

pub use plot::{emit_plot, PlotError, PlotFiles, PlotKind, PlotSpec, Series};

/// Default bin width (in unique tokens) for [`density_curve`].
pub const DEFAULT_BIN_WIDTH: usize = 25;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no word tokens")]
    EmptyTokens,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bin width must be at least 1")]
    InvalidBinWidth,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Word counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FreqTable {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

impl FreqTable {
    pub fn get(&self, word: &str) -> usize {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn unique(&self) -> usize {
        self.counts.len()
    }

    /// Entries by descending count, ties by word.
    pub fn most_common(&self) -> Vec<(&str, usize)> {
        let mut v: Vec<(&str, usize)> = self.counts.iter().map(|(w, &c)| (w.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn extend<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) {
        for t in tokens {
            *self.counts.entry(t.to_string()).or_default() += 1;
            self.total += 1;
        }
    }
}

pub fn freq_dist<S: AsRef<str>>(tokens: &[S]) -> FreqTable {
    let mut table = FreqTable::default();
    table.extend(tokens.iter().map(AsRef::as_ref));
    table
}

/// Words excluded from the lexical-density numerator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        Self(
            words
                .iter()
                .map(|w| clean_text(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        let text = fs::read_to_string(path).map_err(|source| AnalyticsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let words: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Ok(Self::from_words(&words))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LexicalStats {
    pub token_count: usize,
    pub unique_count: usize,
    pub type_token_ratio: f64,
    /// Fraction of tokens that are not stopwords.
    pub lexical_density: f64,
}

pub fn lexical_stats_of_tokens<S: AsRef<str>>(tokens: &[S], stopwords: &Stopwords) -> Result<LexicalStats, AnalyticsError> {
    if tokens.is_empty() {
        return Err(AnalyticsError::EmptyTokens);
    }
    let unique: HashSet<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let content = tokens.iter().filter(|t| !stopwords.contains(t.as_ref())).count();
    let n = tokens.len() as f64;
    Ok(LexicalStats {
        token_count: tokens.len(),
        unique_count: unique.len(),
        type_token_ratio: unique.len() as f64 / n,
        lexical_density: content as f64 / n,
    })
}

pub fn record_tokens(record: &SongRecord) -> Vec<String> {
    word_tokenize(&clean_text(&record.lyrics)).into_iter().map(String::from).collect()
}

pub fn lexical_stats(record: &SongRecord, stopwords: &Stopwords) -> Result<LexicalStats, AnalyticsError> {
    lexical_stats_of_tokens(&record_tokens(record), stopwords)
}

/// One bin `[lower, upper)` of unique-token counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityBin {
    pub lower: usize,
    pub upper: usize,
    pub songs: usize,
    /// `None` for bins with no songs.
    pub mean_density: Option<f64>,
}

/// Mean lexical density per unique-token-count bin.
///
/// Bins are aligned to multiples of `bin_width` and run contiguously from the
/// bin holding the smallest observed count to the one holding the largest;
/// empty bins in between are kept with `mean_density = None`.
pub fn density_curve(corpus: &Corpus, bin_width: usize, stopwords: &Stopwords) -> Result<Vec<DensityBin>, AnalyticsError> {
    if bin_width == 0 {
        return Err(AnalyticsError::InvalidBinWidth);
    }
    if corpus.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for record in corpus {
        let stats = lexical_stats(record, stopwords)?;
        let bin = stats.unique_count / bin_width;
        let e = sums.entry(bin).or_default();
        e.0 += 1;
        e.1 += stats.lexical_density;
    }
    let first = *sums.keys().next().unwrap();
    let last = *sums.keys().next_back().unwrap();
    Ok((first..=last)
        .map(|b| {
            let (songs, sum) = sums.get(&b).copied().unwrap_or((0, 0.0));
            DensityBin {
                lower: b * bin_width,
                upper: (b + 1) * bin_width,
                songs,
                mean_density: (songs > 0).then(|| sum / songs as f64),
            }
        })
        .collect())
}

/// Plot-ready points `(bin lower bound, mean density)` for nonempty bins.
pub fn density_points(bins: &[DensityBin]) -> Vec<(f64, f64)> {
    bins.iter()
        .filter_map(|b| b.mean_density.map(|d| (b.lower as f64, d)))
        .collect()
}

/// Corpus-wide totals.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub songs: usize,
    pub token_count: usize,
    pub unique_count: usize,
    pub type_token_ratio: f64,
}

pub fn corpus_freq(corpus: &Corpus) -> FreqTable {
    let mut table = FreqTable::default();
    for r in corpus {
        let text = clean_text(&r.lyrics);
        table.extend(word_tokenize(&text));
    }
    table
}

pub fn corpus_summary(corpus: &Corpus, freq: &FreqTable) -> CorpusSummary {
    CorpusSummary {
        songs: corpus.len(),
        token_count: freq.total,
        unique_count: freq.unique(),
        type_token_ratio: if freq.total == 0 {
            0.0
        } else {
            freq.unique() as f64 / freq.total as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MoodLabel;
    use proptest::prelude::*;

    fn song(lyrics: &str) -> SongRecord {
        SongRecord {
            title: String::new(),
            category: String::new(),
            lyrics: lyrics.into(),
            mood: MoodLabel::Sad,
        }
    }

    #[test]
    fn freq_examples() {
        let t = freq_dist(&["la", "la", "di"]);
        assert_eq!(t.get("la"), 2);
        assert_eq!(t.get("di"), 1);
        assert_eq!(t.total, 3);
        assert_eq!(t.most_common()[0], ("la", 2));
        let empty: [&str; 0] = [];
        assert_eq!(freq_dist(&empty), FreqTable::default());
        let many = vec!["t"; 1000];
        let t = freq_dist(&many);
        assert_eq!(t.counts.len(), 1);
        assert_eq!(t.get("t"), 1000);
    }

    #[test]
    fn lexical_examples() {
        let s = lexical_stats_of_tokens(&["a", "b", "a", "b"], &Stopwords::empty()).unwrap();
        assert_eq!(s.type_token_ratio, 0.5);
        assert_eq!(s.lexical_density, 1.0);
        let s = lexical_stats_of_tokens(&["x", "y", "z"], &Stopwords::empty()).unwrap();
        assert_eq!(s.type_token_ratio, 1.0);
        let s = lexical_stats_of_tokens(&["a", "the", "b"], &Stopwords::from_words(&["the"])).unwrap();
        assert!((s.lexical_density - 2.0 / 3.0).abs() < 1e-15);
        let empty: [&str; 0] = [];
        assert!(matches!(lexical_stats_of_tokens(&empty, &Stopwords::empty()), Err(AnalyticsError::EmptyTokens)));
        assert!(lexical_stats(&song("।।"), &Stopwords::empty()).is_err());
    }

    #[test]
    fn density_curve_single_and_identical() {
        let c = Corpus::new(vec![song("a b c")], "t");
        let bins = density_curve(&c, 25, &Stopwords::empty()).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(density_points(&bins).len(), 1);

        let stop = Stopwords::from_words(&["b"]);
        let c = Corpus::new(vec![song("a b c"), song("x b y")], "t");
        let bins = density_curve(&c, 25, &stop).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].songs, 2);
        assert!((bins[0].mean_density.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(density_curve(&Corpus::new(vec![], "t"), 25, &stop).is_err());
        assert!(density_curve(&c, 0, &stop).is_err());
    }

    #[test]
    fn density_curve_keeps_gap_bins() {
        let long: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let c = Corpus::new(vec![song("a b"), song(&long.join(" "))], "t");
        let bins = density_curve(&c, 25, &Stopwords::empty()).unwrap();
        assert_eq!(bins.iter().map(|b| b.lower).collect::<Vec<_>>(), vec![0, 25, 50]);
        assert_eq!(bins[1].mean_density, None);
        assert_eq!(density_points(&bins), vec![(0.0, 1.0), (50.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn freq_total_is_input_length(tokens in prop::collection::vec("[a-c]{1,2}", 0..50)) {
            let t = freq_dist(&tokens);
            prop_assert_eq!(t.total, tokens.len());
            prop_assert_eq!(t.counts.values().sum::<usize>(), tokens.len());
            prop_assert!(t.counts.values().all(|&c| c > 0));
        }

        #[test]
        fn ttr_is_one_iff_distinct(tokens in prop::collection::vec("[a-e]{1,2}", 1..30)) {
            let s = lexical_stats_of_tokens(&tokens, &Stopwords::empty()).unwrap();
            let distinct = tokens.iter().collect::<HashSet<_>>().len() == tokens.len();
            prop_assert_eq!(s.type_token_ratio == 1.0, distinct);
            prop_assert!(s.unique_count <= s.token_count);
            prop_assert!(s.type_token_ratio > 0.0 && s.type_token_ratio <= 1.0);
        }

        #[test]
        fn density_bins_partition_range(
            songs in prop::collection::vec(prop::collection::vec("[a-z]{1,2}", 1..80), 1..12),
            width in 1usize..30,
        ) {
            let records: Vec<SongRecord> = songs.iter().map(|w| song(&w.join(" "))).collect();
            let corpus = Corpus::new(records.clone(), "p");
            let bins = density_curve(&corpus, width, &Stopwords::empty()).unwrap();
            for pair in bins.windows(2) {
                prop_assert_eq!(pair[0].upper, pair[1].lower);
            }
            prop_assert_eq!(bins.iter().map(|b| b.songs).sum::<usize>(), records.len());
            for r in &records {
                let u = lexical_stats(r, &Stopwords::empty()).unwrap().unique_count;
                prop_assert_eq!(bins.iter().filter(|b| b.lower <= u && u < b.upper).count(), 1);
            }
        }
    }
}
