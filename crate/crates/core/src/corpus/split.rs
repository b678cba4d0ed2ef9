use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, MoodLabel, Result};

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        let ok = r.iter().all(|x| x.is_finite() && *x > 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidRatios(self.train, self.val, self.test))
        }
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`. Extra units go
/// to the largest remainders; ties prefer the split that has so far received
/// the least relative to its target, so totals across classes stay balanced.
fn apportion(n: usize, ratios: &[f64; 3], surplus: &mut [f64; 3]) -> [usize; 3] {
    let targets = ratios.map(|r| n as f64 * r);
    let mut counts = targets.map(|t| t.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.partial_cmp(&ra)
            .unwrap()
            .then(surplus[a].partial_cmp(&surplus[b]).unwrap())
            .then(a.cmp(&b))
    });
    for &s in order.iter().take(n.saturating_sub(assigned)) {
        counts[s] += 1;
    }
    for s in 0..3 {
        surplus[s] += counts[s] as f64 - targets[s];
    }
    counts
}

/// Splits the corpus per mood into train/validation/test.
///
/// Each split keeps the original record order. Per-class split sizes deviate
/// from `count * ratio` by at most one record.
pub fn stratified_split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    ratios.validate()?;
    let mut by_class: [Vec<usize>; MoodLabel::COUNT] = Default::default();
    for (i, r) in corpus.iter().enumerate() {
        by_class[r.mood.index()].push(i);
    }
    for mood in MoodLabel::ALL {
        let count = by_class[mood.index()].len();
        if count < 3 {
            return Err(CorpusError::ClassTooSmall { mood, count, needed: 3 });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio_arr = ratios.as_array();
    let mut surplus = [0.0; 3];
    let mut assigned: [Vec<usize>; 3] = Default::default();
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), &ratio_arr, &mut surplus);
        let mut rest = members.as_slice();
        for (s, &c) in counts.iter().enumerate() {
            let (head, tail) = rest.split_at(c);
            assigned[s].extend_from_slice(head);
            rest = tail;
        }
    }

    let names = ["train", "val", "test"];
    let [train, val, test] = [0, 1, 2].map(|s| {
        let mut idx = std::mem::take(&mut assigned[s]);
        idx.sort_unstable();
        let records = idx.into_iter().map(|i| corpus.records()[i].clone()).collect();
        Corpus::new(records, format!("{}#{}", corpus.provenance(), names[s]))
    });
    Ok((train, val, test))
}
