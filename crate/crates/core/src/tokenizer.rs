//! Whitespace tokenization with punctuation peeling.
//!
//! Each whitespace-delimited chunk loses its leading and trailing
//! non-alphanumeric characters, each becoming a one-character token.
//! Whatever remains stays whole, so `top-10` and `singer's` survive.

use crate::types::{NlqDoc, Token};

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> NlqDoc {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    NlqDoc::from_parts_unchecked(text.to_string(), tokens)
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let single = |pos: usize| Token { text: chars[pos].to_string(), char_start: pos, char_end: pos + 1 };

    let mut lo = start;
    while lo < end && !is_word_char(chars[lo]) {
        out.push(single(lo));
        lo += 1;
    }
    if lo == end {
        return;
    }
    let mut hi = end;
    while hi > lo && !is_word_char(chars[hi - 1]) {
        hi -= 1;
    }
    out.push(Token { text: chars[lo..hi].iter().collect(), char_start: lo, char_end: hi });
    out.extend((hi..end).map(single));
}
