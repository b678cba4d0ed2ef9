//! Lyrics corpus: records, CSV ingestion, cleaning, splitting and summaries.

mod clean;
mod split;
mod synthetic;

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean_text, is_punctuation};
pub use split::{stratified_split, SplitRatios};
pub use synthetic::{synthesize_corpus, FILLER_WORDS};

/// Exact header row of the corpus CSV.
pub const CSV_HEADER: [&str; 4] = ["title", "category", "lyrics", "mood"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: expected `title,category,lyrics,mood`, found `{found}`")]
    MalformedHeader { found: String },
    #[error("zero surviving rows ({dropped} dropped)")]
    NoSurvivingRows { dropped: usize },
    #[error("corpus is empty")]
    Empty,
    #[error("unknown mood label `{0}` (expected happy, sad, romantic or relaxed)")]
    UnknownMood(String),
    #[error("split ratios must be positive and sum to 1, got ({0}, {1}, {2})")]
    InvalidRatios(f64, f64, f64),
    #[error("class {mood} has {count} members, need at least {needed} for a {needed}-way split")]
    ClassTooSmall {
        mood: MoodLabel,
        count: usize,
        needed: usize,
    },
    #[error("per_class must be at least 1")]
    InvalidPerClass,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// The four moods, with a fixed integer encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoodLabel {
    Happy = 0,
    Sad = 1,
    Romantic = 2,
    Relaxed = 3,
}

impl MoodLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [MoodLabel; 4] = [
        MoodLabel::Happy,
        MoodLabel::Sad,
        MoodLabel::Romantic,
        MoodLabel::Relaxed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MoodLabel::Happy => "happy",
            MoodLabel::Sad => "sad",
            MoodLabel::Romantic => "romantic",
            MoodLabel::Relaxed => "relaxed",
        }
    }
}

impl fmt::Display for MoodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MoodLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        MoodLabel::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| CorpusError::UnknownMood(s.to_string()))
    }
}

/// One song: the dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SongRecord {
    pub title: String,
    pub category: String,
    /// Raw lyrics as stored in the file; guaranteed nonempty after [`clean_text`].
    pub lyrics: String,
    pub mood: MoodLabel,
}

impl SongRecord {
    pub fn cleaned_lyrics(&self) -> String {
        clean_text(&self.lyrics)
    }
}

/// An ordered, immutable collection of songs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<SongRecord>,
    provenance: String,
}

impl Corpus {
    pub fn new(records: Vec<SongRecord>, provenance: impl Into<String>) -> Self {
        Self {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn records(&self) -> &[SongRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SongRecord> {
        self.records.iter()
    }

    /// Serializes the corpus as CSV with the canonical header.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        writer.write_record(CSV_HEADER)?;
        for r in &self.records {
            writer.write_record([r.title.as_str(), &r.category, &r.lyrics, r.mood.as_str()])?;
        }
        writer.flush().map_err(csv::Error::from)?;
        writer
            .into_inner()
            .map_err(|e| CorpusError::Csv(csv::Error::from(e.into_error())))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv_bytes()?;
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = File::create(path).map_err(io_err)?;
        file.write_all(&bytes).map_err(io_err)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a SongRecord;
    type IntoIter = std::slice::Iter<'a, SongRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    EmptyLyrics,
    BadMood(String),
    WrongFieldCount(usize),
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::EmptyLyrics => f.write_str("empty-lyrics"),
            DropReason::BadMood(m) => write!(f, "bad-mood value={m:?}"),
            DropReason::WrongFieldCount(n) => write!(f, "wrong-field-count fields={n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRow {
    /// 1-based index of the data row (the header is row 0).
    pub row: usize,
    pub reason: DropReason,
}

/// Rows skipped while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropReport {
    pub rows: Vec<DroppedRow>,
}

impl DropReport {
    pub fn count(&self) -> usize {
        self.rows.len()
    }

    /// One line per dropped row followed by a total line.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for d in &self.rows {
            out.push_str(&format!("dropped row={} reason={}\n", d.row, d.reason));
        }
        out.push_str(&format!("dropped total={}\n", self.count()));
        out
    }
}

/// Loads a corpus from a CSV file.
pub fn load_corpus(path: &Path) -> Result<(Corpus, DropReport)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_corpus(&bytes, path.display().to_string())
}

/// Parses CSV bytes into a corpus; `provenance` is recorded verbatim.
pub fn parse_corpus(bytes: &[u8], provenance: impl Into<String>) -> Result<(Corpus, DropReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    let header_fields: Vec<&str> = header.iter().collect();
    if header_fields != CSV_HEADER {
        return Err(CorpusError::MalformedHeader {
            found: header_fields.join(","),
        });
    }

    let mut records = Vec::new();
    let mut report = DropReport::default();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if row.len() != CSV_HEADER.len() {
            report.rows.push(DroppedRow {
                row: row_no,
                reason: DropReason::WrongFieldCount(row.len()),
            });
            continue;
        }
        let lyrics = &row[2];
        if clean_text(lyrics).is_empty() {
            report.rows.push(DroppedRow {
                row: row_no,
                reason: DropReason::EmptyLyrics,
            });
            continue;
        }
        let Ok(mood) = row[3].parse::<MoodLabel>() else {
            report.rows.push(DroppedRow {
                row: row_no,
                reason: DropReason::BadMood(row[3].to_string()),
            });
            continue;
        };
        records.push(SongRecord {
            title: row[0].to_string(),
            category: row[1].to_string(),
            lyrics: lyrics.to_string(),
            mood,
        });
    }
    for d in &report.rows {
        log::warn!("dropped row {}: {}", d.row, d.reason);
    }
    if records.is_empty() {
        return Err(CorpusError::NoSurvivingRows {
            dropped: report.count(),
        });
    }
    Ok((Corpus::new(records, provenance), report))
}

/// Per-mood counts and fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoodDistribution {
    pub counts: [usize; MoodLabel::COUNT],
    pub fractions: [f64; MoodLabel::COUNT],
}

impl MoodDistribution {
    pub fn count(&self, mood: MoodLabel) -> usize {
        self.counts[mood.index()]
    }

    pub fn fraction(&self, mood: MoodLabel) -> f64 {
        self.fractions[mood.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn mood_distribution(corpus: &Corpus) -> Result<MoodDistribution> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts = [0usize; MoodLabel::COUNT];
    for r in corpus {
        counts[r.mood.index()] += 1;
    }
    let n = corpus.len() as f64;
    let fractions = counts.map(|c| c as f64 / n);
    Ok(MoodDistribution { counts, fractions })
}
