//! Mood classification of song lyrics.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`corpus`]: CSV ingestion, text cleaning, stratified splits, synthetic corpora.
//! - [`tokenizer`]: whitespace word tokenization and a trainable WordPiece vocabulary.
//! - [`analytics`]: frequency tables, type-token ratio, lexical density, SVG plots.
//! - [`model`]: a small BERT-style encoder classifier with hand-written backprop.
//! - [`baseline`]: TF-IDF features and multinomial Naive Bayes.
//! - [`trainer`]: AdamW, linear decay, gradient clipping and the epoch loop.
//! - [`evaluation`]: confusion matrices and classification reports.

pub mod analytics;
pub mod baseline;
pub mod corpus;
pub mod evaluation;
pub mod model;
pub mod seed;
pub mod tokenizer;
pub mod trainer;

pub use corpus::{Corpus, MoodLabel, SongRecord};
pub use evaluation::{ConfusionMatrix, EvalReport};
pub use model::{ModelConfig, Parameters};
pub use tokenizer::{EncodedExample, TokenizerConfig, Vocabulary};
pub use trainer::{TrainConfig, TrainHistory};
