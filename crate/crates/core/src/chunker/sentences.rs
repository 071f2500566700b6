use std::ops::Range;

/// Lower-cased words that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "e.g.", "i.e.", "etc.", "fig.", "eq.", "vs.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Whether the word ending at byte `end` (exclusive, includes the period) is
/// on the abbreviation stop-list.
fn ends_with_abbreviation(text: &str, end: usize) -> bool {
    let head = &text[..end];
    let start = head
        .rfind(char::is_whitespace)
        .map(|i| i + head[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = head[start..]
        .trim_start_matches(|c: char| matches!(c, '(' | '[' | '"' | '\'' | '\u{201c}' | '\u{2018}'))
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Byte ranges of each sentence in `text`, with surrounding whitespace
/// trimmed.
///
/// A boundary is a run of `.`, `!` or `?` (optionally followed by closing
/// quotes or brackets), then whitespace, then an uppercase letter or opening
/// quote. A period that closes a stop-listed abbreviation never ends a
/// sentence.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        let first_terminal = i;
        while i < chars.len() && is_terminal(chars[i].1) {
            i += 1;
        }
        let only_period = i - first_terminal == 1 && chars[first_terminal].1 == '.';
        while i < chars.len() && is_closer(chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(text.len(), |&(b, _)| b);

        let mut j = i;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == i || j == chars.len() || !opens_sentence(chars[j].1) {
            continue;
        }
        if only_period && ends_with_abbreviation(text, end) {
            continue;
        }
        push_trimmed(text, start..end, &mut spans);
        start = chars[j].0;
        i = j;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, range: Range<usize>, spans: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        let s = range.start + lead;
        spans.push(s..s + trimmed.len());
    }
}

/// Split `text` into sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|r| text[r].to_string())
        .collect()
}
