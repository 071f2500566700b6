use std::fmt::Debug;
use std::ops::Range;

/// Turns text into a token sequence. Token counts drive every budget in the
/// index (chunk size, summarizer threshold, retrieval context size).
pub trait Tokenizer: Debug + Send + Sync {
    /// Stable name recorded in the build config.
    fn name(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }

    /// Keep at most `max_tokens` tokens of `text`.
    ///
    /// The default rejoins tokens with single spaces; span-aware tokenizers
    /// override this to cut the original text instead.
    fn truncate(&self, text: &str, max_tokens: usize) -> String {
        let tokens = self.tokenize(text);
        tokens
            .into_iter()
            .take(max_tokens)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Default tokenizer: whitespace separates tokens, runs of alphanumeric
/// characters form one token, and every other visible character is a token
/// of its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WhitespacePunct;

impl WhitespacePunct {
    pub const NAME: &'static str = "whitespace-punct";

    /// Byte ranges of each token in `text`.
    pub fn spans(text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                if word_start.is_none() {
                    word_start = Some(i);
                }
                continue;
            }
            if let Some(start) = word_start.take() {
                spans.push(start..i);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        }
        if let Some(start) = word_start {
            spans.push(start..text.len());
        }
        spans
    }
}

impl Tokenizer for WhitespacePunct {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        Self::spans(text)
            .into_iter()
            .map(|r| text[r].to_string())
            .collect()
    }

    fn count(&self, text: &str) -> usize {
        Self::spans(text).len()
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> String {
        let spans = Self::spans(text);
        if spans.len() <= max_tokens {
            return text.trim().to_string();
        }
        if max_tokens == 0 {
            return String::new();
        }
        let end = spans[max_tokens - 1].end;
        text[..end].trim().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_has_no_tokens() {
        assert!(WhitespacePunct.tokenize("").is_empty());
        assert!(WhitespacePunct.tokenize("   \n\t").is_empty());
    }

    #[test]
    fn punctuation_is_split_from_words() {
        assert_eq!(
            WhitespacePunct.tokenize("Hello, world."),
            vec!["Hello", ",", "world", "."]
        );
    }

    #[test]
    fn repeated_tokens_are_counted() {
        assert_eq!(WhitespacePunct.count("a a a"), 3);
    }

    #[test]
    fn unicode_words_stay_whole() {
        assert_eq!(
            WhitespacePunct.tokenize("naïve café—ok"),
            vec!["naïve", "café", "—", "ok"]
        );
    }

    #[test]
    fn truncate_cuts_original_text() {
        assert_eq!(WhitespacePunct.truncate("a b c d e", 3), "a b c");
        assert_eq!(WhitespacePunct.truncate("Hi, there you.", 2), "Hi,");
        assert_eq!(WhitespacePunct.truncate("short", 10), "short");
    }

    #[test]
    fn default_truncate_joins_tokens() {
        #[derive(Debug)]
        struct Chars;
        impl Tokenizer for Chars {
            fn name(&self) -> &str {
                "chars"
            }
            fn tokenize(&self, text: &str) -> Vec<String> {
                text.chars()
                    .filter(|c| !c.is_whitespace())
                    .map(String::from)
                    .collect()
            }
        }
        assert_eq!(Chars.truncate("abcd", 2), "a b");
        assert_eq!(Chars.count("ab c"), 3);
    }
}
