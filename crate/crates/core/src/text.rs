//! Word-level normalization shared by tagging, tokenization and BLEU.

/// Lowercases, splits on whitespace and strips leading/trailing punctuation.
/// Tokens that are pure punctuation disappear.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Canonical caption text: normalized words joined by single spaces.
pub fn normalize_caption(text: &str) -> String {
    words(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_and_lowercases() {
        assert_eq!(words("  A Man, riding a bike... "), ["a", "man", "riding", "a", "bike"]);
        assert_eq!(words("-- !! ,"), Vec::<String>::new());
        assert_eq!(words("man's (hat)"), ["man's", "hat"]);
        assert_eq!(normalize_caption("Two  DOGS."), "two dogs");
    }
}
