//! Synthetic corpora for tests and demos.
//!
//! Each mood owns a disjoint keyword pool; every line of a generated song
//! mixes keywords of its own mood with shared filler words, so a bag-of-words
//! model separates the classes perfectly.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

use super::{Corpus, CorpusError, MoodLabel, Result, SongRecord};

const HAPPY: &[&str] = &["আনন্দ", "হাসি", "খুশি", "উৎসব", "নাচ", "রঙিন", "উল্লাস", "মজা"];
const SAD: &[&str] = &["দুঃখ", "কান্না", "বিরহ", "অশ্রু", "বেদনা", "একা", "শোক", "যন্ত্রণা"];
const ROMANTIC: &[&str] = &["প্রেম", "ভালোবাসা", "প্রিয়া", "হৃদয়", "প্রণয়", "মিলন", "অনুরাগ", "সোহাগ"];
const RELAXED: &[&str] = &["শান্তি", "নদী", "বাতাস", "ঘুম", "নীরব", "স্নিগ্ধ", "জোছনা", "বিশ্রাম"];

/// Shared filler words used when no hint list is supplied.
pub const FILLER_WORDS: &[&str] = &[
    "আমার", "তুমি", "এই", "যে", "মন", "গান", "আজ", "কেন", "সে", "তোমার", "আমি", "কথা", "দিন", "রাত", "পথ", "সুর",
];

const CATEGORIES: &[&str] = &["modern", "folk", "rabindra sangeet", "film", "nazrul geeti", ""];

const LINES_PER_SONG: usize = 4;
const WORDS_PER_LINE: usize = 6;

fn keywords(mood: MoodLabel) -> &'static [&'static str] {
    match mood {
        MoodLabel::Happy => HAPPY,
        MoodLabel::Sad => SAD,
        MoodLabel::Romantic => ROMANTIC,
        MoodLabel::Relaxed => RELAXED,
    }
}

/// Generates `per_class` songs per mood, interleaved Happy, Sad, Romantic,
/// Relaxed. `vocab_hint`, when nonempty, replaces the filler pool; hint words
/// that collide with a mood keyword are ignored to keep classes separable.
pub fn synthesize_corpus(seed: u64, per_class: usize, vocab_hint: &[String]) -> Result<Corpus> {
    if per_class == 0 {
        return Err(CorpusError::InvalidPerClass);
    }
    let all_keywords: Vec<String> = MoodLabel::ALL
        .iter()
        .flat_map(|&m| keywords(m).iter().map(|w| w.nfc().collect::<String>()))
        .collect();
    let mut fillers: Vec<String> = vocab_hint
        .iter()
        .map(|w| super::clean_text(w))
        .filter(|w| !w.is_empty() && !w.contains(' ') && !all_keywords.contains(w))
        .collect();
    if fillers.is_empty() {
        fillers = FILLER_WORDS.iter().map(|w| w.nfc().collect()).collect();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(per_class * MoodLabel::COUNT);
    for i in 0..per_class {
        for mood in MoodLabel::ALL {
            let pool: Vec<String> = keywords(mood).iter().map(|w| w.nfc().collect()).collect();
            let mut lines = Vec::with_capacity(LINES_PER_SONG);
            for _ in 0..LINES_PER_SONG {
                let mut words = Vec::with_capacity(WORDS_PER_LINE);
                words.push(pool.choose(&mut rng).unwrap().as_str());
                for _ in 1..WORDS_PER_LINE {
                    let w = if rng.random_bool(0.4) {
                        pool.choose(&mut rng).unwrap()
                    } else {
                        fillers.choose(&mut rng).unwrap()
                    };
                    words.push(w.as_str());
                }
                // first word need not lead the line
                let j = rng.random_range(0..words.len());
                words.swap(0, j);
                lines.push(format!("{}।", words.join(" ")));
            }
            let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
            records.push(SongRecord {
                title: format!("{} {}", pool[i % pool.len()], i + 1),
                category: category.to_string(),
                lyrics: lines.join("\n"),
                mood,
            });
        }
    }
    Ok(Corpus::new(records, format!("synthetic({seed})")))
}
