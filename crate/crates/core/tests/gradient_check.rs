use std::time::Instant;

use moodlyrics::model::gradcheck::check_gradients;
use moodlyrics::model::{init_model, ModelConfig, Mode};
use moodlyrics::tokenizer::{EncodedExample, CLS_ID, PAD_ID, SEP_ID};
use moodlyrics::MoodLabel;

fn example(body: &[u32], len: usize) -> EncodedExample {
    let mut ids = vec![CLS_ID];
    ids.extend_from_slice(body);
    ids.push(SEP_ID);
    let active = ids.len();
    ids.resize(len, PAD_ID);
    EncodedExample {
        mask: (0..len).map(|i| u8::from(i < active)).collect(),
        ids,
        label: None,
    }
}

#[test]
fn desk_model_gradients_match_finite_differences() {
    let cfg = ModelConfig::desk(24, 12);
    // Scaled-up weights so attention query/key gradients are well above
    // finite-difference noise.
    let mut params = init_model(&cfg).unwrap();
    for t in params.arrays_mut() {
        for x in t.data.iter_mut() {
            *x *= 10.0;
        }
    }
    let batch = [example(&[4, 9, 17, 5], 12), example(&[20, 21, 4], 12), example(&[6], 12)];
    let labels = [MoodLabel::Happy, MoodLabel::Relaxed, MoodLabel::Sad];
    let start = Instant::now();
    let checks = check_gradients(&params, &batch, &labels, Mode::Train { dropout_seed: 7 }, 1e-4, 128, 1).unwrap();
    for c in &checks {
        println!("{:<36} {:>6}/{:<6} max_rel={:.3e} max|g|={:.3e}", c.name, c.checked, c.total, c.max_relative_error, c.max_abs_gradient);
    }
    println!("elapsed {:?}", start.elapsed());
    assert!(checks.iter().all(|c| c.max_relative_error <= 1e-3));
}
