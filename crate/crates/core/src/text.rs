//! Tokenisation helpers shared by corpus statistics and the static backends.

/// Inclusive bounds of the Bengali Unicode block.
const BENGALI_BLOCK: (char, char) = ('\u{0980}', '\u{09FF}');

/// True when the code point lies in the Bengali block.
pub fn is_bengali_char(c: char) -> bool {
    (BENGALI_BLOCK.0..=BENGALI_BLOCK.1).contains(&c)
}

/// A token counts as Bengali when at least one of its code points is Bengali.
pub fn is_bengali_token(token: &str) -> bool {
    token.chars().any(is_bengali_char)
}

/// Whitespace tokens after trimming; punctuation stays attached.
///
/// This is the tokenizer used for corpus statistics. It is deliberately the
/// simplest reproducible rule: maximal runs of non-whitespace.
pub fn whitespace_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Number of whitespace tokens.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Word tokenizer for the static embedding backends: whitespace splitting,
/// then punctuation characters are broken out as separate tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Punctuation for word tokenisation: ASCII punctuation plus the Bengali
/// sentence terminators (dari and double dari).
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || c == '\u{0964}' || c == '\u{0965}'
}
