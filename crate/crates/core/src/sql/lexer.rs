use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Bare or quoted word. Bare words double as keywords.
    Word {
        value: String,
        quote: Option<char>,
    },
    Number(String),
    Str(String),
    Comma,
    LParen,
    RParen,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Concat,
    Eq,
    EqEq,
    Neq,
    LtGt,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word { value, quote: None } => format!("word {value:?}"),
            Tok::Word { value, quote: Some(q) } => format!("quoted identifier {q}{value}{q}"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Eof => "end of input".to_string(),
            other => format!("{:?}", other.symbol()),
        }
    }

    pub(crate) fn symbol(&self) -> &'static str {
        match self {
            Tok::Comma => ",",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Dot => ".",
            Tok::Star => "*",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Concat => "||",
            Tok::Eq => "=",
            Tok::EqEq => "==",
            Tok::Neq => "!=",
            Tok::LtGt => "<>",
            Tok::Lt => "<",
            Tok::LtEq => "<=",
            Tok::Gt => ">",
            Tok::GtEq => ">=",
            Tok::Semicolon => ";",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Lexeme {
    pub tok: Tok,
    /// Byte offset of the first character.
    pub offset: usize,
}

pub(crate) fn lex(sql: &str) -> Result<Vec<Lexeme>, ParseError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // comments
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            match sql[i + 2..].find("*/") {
                Some(p) => i = i + 2 + p + 2,
                None => return Err(ParseError::new(start, "end of block comment", "end of input")),
            }
            continue;
        }
        let tok = match c {
            b'\'' => {
                let (s, next) = quoted(sql, i, '\'')?;
                i = next;
                Tok::Str(s)
            }
            b'"' | b'`' => {
                let q = c as char;
                let (s, next) = quoted(sql, i, q)?;
                i = next;
                Tok::Word { value: s, quote: Some(q) }
            }
            b'[' => {
                let Some(p) = sql[i + 1..].find(']') else {
                    return Err(ParseError::new(start, "closing ]", "end of input"));
                };
                let value = sql[i + 1..i + 1 + p].to_string();
                i = i + 1 + p + 1;
                Tok::Word { value, quote: Some('[') }
            }
            b'0'..=b'9' => {
                i = number_end(bytes, i);
                Tok::Number(sql[start..i].to_string())
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = number_end(bytes, i);
                Tok::Number(sql[start..i].to_string())
            }
            _ if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                let rest = &sql[i..];
                let len = rest
                    .char_indices()
                    .find(|&(_, ch)| !(ch == '_' || ch == '$' || ch.is_alphanumeric()))
                    .map_or(rest.len(), |(p, _)| p);
                i += len;
                Tok::Word { value: sql[start..i].to_string(), quote: None }
            }
            _ => {
                let two = bytes.get(i + 1).copied();
                let (tok, width) = match (c, two) {
                    (b'|', Some(b'|')) => (Tok::Concat, 2),
                    (b'=', Some(b'=')) => (Tok::EqEq, 2),
                    (b'!', Some(b'=')) => (Tok::Neq, 2),
                    (b'<', Some(b'>')) => (Tok::LtGt, 2),
                    (b'<', Some(b'=')) => (Tok::LtEq, 2),
                    (b'>', Some(b'=')) => (Tok::GtEq, 2),
                    (b',', _) => (Tok::Comma, 1),
                    (b'(', _) => (Tok::LParen, 1),
                    (b')', _) => (Tok::RParen, 1),
                    (b'.', _) => (Tok::Dot, 1),
                    (b'*', _) => (Tok::Star, 1),
                    (b'+', _) => (Tok::Plus, 1),
                    (b'-', _) => (Tok::Minus, 1),
                    (b'/', _) => (Tok::Slash, 1),
                    (b'%', _) => (Tok::Percent, 1),
                    (b'=', _) => (Tok::Eq, 1),
                    (b'<', _) => (Tok::Lt, 1),
                    (b'>', _) => (Tok::Gt, 1),
                    (b';', _) => (Tok::Semicolon, 1),
                    _ => {
                        let ch = sql[i..].chars().next().unwrap_or('?');
                        return Err(ParseError::new(start, "a token", format!("character {ch:?}")));
                    }
                };
                i += width;
                tok
            }
        };
        out.push(Lexeme { tok, offset: start });
    }
    out.push(Lexeme { tok: Tok::Eof, offset: sql.len() });
    Ok(out)
}

/// Reads a `q`-quoted run starting at `start`; a doubled quote is an escape.
fn quoted(sql: &str, start: usize, q: char) -> Result<(String, usize), ParseError> {
    let mut value = String::new();
    let mut iter = sql[start + 1..].char_indices().peekable();
    while let Some((p, ch)) = iter.next() {
        if ch == q {
            if iter.peek().map(|&(_, c)| c) == Some(q) {
                value.push(q);
                iter.next();
                continue;
            }
            return Ok((value, start + 1 + p + 1));
        }
        value.push(ch);
    }
    Err(ParseError::new(start, format!("closing {q}"), "end of input"))
}

fn number_end(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}
