//! Text normalization and tokenization shared by every stage.
//!
//! `normalize` keeps display casing; `fold` is the comparison form used for
//! matching. `tokenize` is lowercase alphanumeric runs with punctuation
//! dropped and no stemming.

use unicode_normalization::{is_nfc, is_nfc_quick, IsNormalized, UnicodeNormalization};

/// NFC composition, whitespace runs collapsed to one space, ends trimmed.
pub fn normalize(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let collapsed = composed.split_whitespace().collect::<Vec<_>>().join(" ");
    if is_nfc(&collapsed) {
        collapsed
    } else {
        collapsed.nfc().collect()
    }
}

/// Case-folded normalized form for matching.
pub fn fold(text: &str) -> String {
    normalize(text).to_lowercase()
}

/// `true` when both strings are equal under case-folded comparison.
pub fn folded_eq(a: &str, b: &str) -> bool {
    fold(a) == fold(b)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect()
    };
    if is_nfc_quick(text.chars()) == IsNormalized::Yes {
        split(text)
    } else {
        split(&text.nfc().collect::<String>())
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Longest prefix of `text` no longer than `max_chars` that ends on a word
/// boundary. Returns `None` when even the first word does not fit.
pub fn truncate_at_word(text: &str, max_chars: usize) -> Option<String> {
    let text = normalize(text);
    if text.is_empty() {
        return None;
    }
    if char_len(&text) <= max_chars {
        return Some(text);
    }
    let chars: Vec<char> = text.chars().collect();
    // A cut at position i is clean if chars[i] is a space (the word before it is complete).
    let mut cut = None;
    for i in (1..=max_chars.min(chars.len() - 1)).rev() {
        if chars[i] == ' ' {
            cut = Some(i);
            break;
        }
    }
    let prefix: String = chars[..cut?].iter().collect();
    let trimmed = trim_trailing_separators(&prefix);
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// Like [`truncate_at_word`], but prefers ending after a complete sentence when
/// that keeps at least half of the budget.
pub fn truncate_at_sentence(text: &str, max_chars: usize) -> Option<String> {
    let text = normalize(text);
    if char_len(&text) <= max_chars {
        return (!text.is_empty()).then_some(text);
    }
    let chars: Vec<char> = text.chars().collect();
    for end in (1..=max_chars).rev() {
        let c = chars[end - 1];
        let at_boundary = end == chars.len() || chars[end] == ' ';
        if matches!(c, '.' | '!' | '?') && at_boundary {
            if end * 2 >= max_chars {
                return Some(chars[..end].iter().collect());
            }
            break;
        }
    }
    truncate_at_word(&text, max_chars)
}

fn trim_trailing_separators(s: &str) -> &str {
    s.trim_end_matches(|c: char| {
        c.is_whitespace() || matches!(c, ',' | ';' | ':' | '-' | '–' | '—' | '|' | '/')
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize("  Great   Shoes "), "Great Shoes");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("a\t\nb"), "a b");
    }

    #[test]
    fn normalize_composes() {
        assert_eq!(normalize("cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn case_folded_match() {
        assert!(folded_eq("FREE Shipping", "free shipping"));
        assert!(!folded_eq("FREE Shipping", "free shopping"));
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Buy Now!"), vec!["buy", "now"]);
        assert_eq!(tokenize("surface 8"), vec!["surface", "8"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("xyz.com/shoes"), vec!["xyz", "com", "shoes"]);
    }

    #[test]
    fn word_truncation_never_cuts_mid_word() {
        let title = "Microsoft Surface Pro 8 Laptop Deals and Accessories";
        assert_eq!(char_len(title), 52);
        let cut = truncate_at_word(title, 30).unwrap();
        assert!(char_len(&cut) <= 30);
        assert_eq!(cut, "Microsoft Surface Pro 8 Laptop");
        assert!(title.starts_with(&cut));
        let input_tokens = tokenize(title);
        let out_tokens = tokenize(&cut);
        assert_eq!(&input_tokens[..out_tokens.len()], &out_tokens[..]);
    }

    #[test]
    fn truncation_drops_dangling_separator() {
        assert_eq!(
            truncate_at_word("Shoes, Boots and more", 7).unwrap(),
            "Shoes"
        );
    }

    #[test]
    fn truncation_of_single_long_word_is_none() {
        assert_eq!(truncate_at_word("Supercalifragilistic", 5), None);
        assert_eq!(truncate_at_word("   ", 5), None);
    }

    #[test]
    fn sentence_truncation_prefers_sentence_end() {
        let s = "Fast delivery on every order. Shop thousands of styles from top brands today";
        let cut = truncate_at_sentence(s, 40).unwrap();
        assert_eq!(cut, "Fast delivery on every order.");
        // sentence end too early in the budget: fall back to word boundary
        let s = "Hi. Shop thousands of styles from top brands today";
        let cut = truncate_at_sentence(s, 40).unwrap();
        assert_eq!(cut, "Hi. Shop thousands of styles from top");
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn tokenize_ignores_normalization(s in "\\PC{0,40}") {
            prop_assert_eq!(tokenize(&normalize(&s)), tokenize(&s));
        }

        #[test]
        fn word_truncation_is_a_token_prefix(words in proptest::collection::vec("[a-zA-Z0-9]{1,12}", 1..12), max in 5usize..60) {
            let text = words.join(" ");
            if let Some(cut) = truncate_at_word(&text, max) {
                prop_assert!(char_len(&cut) <= max);
                prop_assert!(text.starts_with(&cut));
                let all = tokenize(&text);
                let head = tokenize(&cut);
                prop_assert_eq!(&all[..head.len()], &head[..]);
            }
        }
    }
}
