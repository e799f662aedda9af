//! Offset-preserving tokenization shared by the detector, the sanitizer and
//! the deterministic reconstructor. All offsets are Unicode scalar indices.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Symbol,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_number(&self) -> bool {
        self.kind == TokenKind::Number
    }

    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }

    pub fn is_symbol(&self, c: char) -> bool {
        self.kind == TokenKind::Symbol && self.text.starts_with(c)
    }

    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }

    /// Word with a trailing possessive or apostrophe stripped, lowercased.
    pub fn lower_stem(&self) -> String {
        let lower = self.lower();
        lower
            .strip_suffix("'s")
            .or_else(|| lower.strip_suffix('\''))
            .unwrap_or(&lower)
            .to_string()
    }
}

/// Split text into word, number and symbol tokens with char offsets.
///
/// Alphanumeric runs form one token; a `.` joins two digits so decimals stay
/// whole; an apostrophe stays inside a word ("Alice's"). Every other
/// non-space character is a single symbol token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j];
                let joins = cj.is_alphanumeric()
                    || (cj == '.'
                        && chars[j - 1].is_ascii_digit()
                        && chars.get(j + 1).is_some_and(|n| n.is_ascii_digit()))
                    || (cj == '\'' && chars.get(j + 1).is_some_and(|n| n.is_alphabetic()));
                if joins {
                    j += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..j].iter().collect();
            let kind = if crate::numeric::normalize_decimal(&text).is_some() {
                TokenKind::Number
            } else {
                TokenKind::Word
            };
            tokens.push(Token { start, end: j, text, kind });
            i = j;
        } else {
            tokens.push(Token {
                start: i,
                end: i + 1,
                text: c.to_string(),
                kind: TokenKind::Symbol,
            });
            i += 1;
        }
    }
    tokens
}

/// Slice by Unicode scalar offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

/// Number of Unicode scalars in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Sentence ranges (char offsets, terminator included). Sentences end at
/// `.`, `?`, `!` or a newline; a `.` inside a number does not terminate.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let is_decimal_point = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if (c == '.' && !is_decimal_point) || c == '?' || c == '!' || c == '\n' {
            if i + 1 > start {
                ranges.push((start, i + 1));
            }
            start = i + 1;
        }
        i += 1;
    }
    if start < chars.len() {
        ranges.push((start, chars.len()));
    }
    ranges
        .into_iter()
        .filter(|(s, e)| chars[*s..*e].iter().any(|c| !c.is_whitespace()))
        .collect()
}

/// Title case: initial uppercase letter followed by at least one character,
/// all lowercase (apostrophes allowed). "Alice" and "Alice's" qualify;
/// "ABC", "x" and "a" do not.
pub fn is_titlecase(word: &str) -> bool {
    let mut chars = word.chars();
    let Some(first) = chars.next() else { return false };
    if !first.is_uppercase() {
        return false;
    }
    let rest: Vec<char> = chars.collect();
    !rest.is_empty() && rest.iter().all(|c| c.is_lowercase() || *c == '\'')
}

/// True when only whitespace separates two char offsets of `chars`.
pub fn gap_is_space(chars: &[char], from: usize, to: usize) -> bool {
    from <= to && chars[from..to].iter().all(|c| c.is_whitespace() && *c != '\n')
}
