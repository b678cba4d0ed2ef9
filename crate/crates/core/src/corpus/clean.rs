use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Unicode punctuation (general category P*) plus the ASCII symbols Rust
/// classes as punctuation (`$`, `+`, `<`, `|`, ...).
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii_punctuation() {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// NFC-normalizes `raw`, turns punctuation (danda and double danda included)
/// into spaces, collapses whitespace runs and trims.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfc() {
        if c.is_whitespace() || is_punctuation(c) {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bengali_danda_and_double_spaces() {
        assert_eq!(clean_text("আমার  সোনার বাংলা।"), "আমার সোনার বাংলা");
        assert_eq!(clean_text("তুমি॥ আমি"), "তুমি আমি");
    }

    #[test]
    fn ascii_punctuation() {
        assert_eq!(clean_text("a,b!!c"), "a b c");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text(" \t\n "), "");
        assert_eq!(clean_text("«hello» — world…"), "hello world");
    }

    #[test]
    fn canonical_composition() {
        // e + combining acute composes to é
        assert_eq!(clean_text("cafe\u{0301}"), "caf\u{e9}");
        // Bengali o-kar written as two vowel signs composes to U+09CB
        assert_eq!(clean_text("\u{0995}\u{09C7}\u{09BE}"), "\u{0995}\u{09CB}");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn idempotent_on_bengali_mix(s in "[\u{0980}-\u{09FF} ,.।॥!\u{0301}a-zA-Z\n\t]{0,60}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
            prop_assert!(!once.contains("  "));
        }
    }
}
