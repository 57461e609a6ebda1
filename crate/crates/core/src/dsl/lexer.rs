use super::{DslError, ErrorKind, Pos};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Identifier or glob pattern (may contain `*`).
    Word(String),
    Str(String),
    Num(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Eq,
    Plus,
    Star,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Num(n) => format!("number {n}"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Eq => "'='".into(),
            Tok::Plus => "'+'".into(),
            Tok::Star => "'*'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |pos: Pos, msg: String| DslError::new(pos, ErrorKind::Syntax, msg);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let advance = |i: &mut usize, col: &mut usize, n: usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(&mut i, &mut col, 1);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut col, 1);
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '=' => Some(Tok::Eq),
            '+' => Some(Tok::Plus),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            advance(&mut i, &mut col, 1);
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.'))
            || (c == '.' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        if starts_number {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    j = k;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let text: String = chars[start..j].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| err(pos, format!("malformed number '{text}'")))?;
            out.push((Tok::Num(value), pos));
            advance(&mut i, &mut col, j - start);
            continue;
        }
        if c == '.' {
            out.push((Tok::Dot, pos));
            advance(&mut i, &mut col, 1);
            continue;
        }
        if c == '*' && !chars.get(i + 1).is_some_and(|&n| is_word(n)) {
            out.push((Tok::Star, pos));
            advance(&mut i, &mut col, 1);
            continue;
        }
        if is_word(c) || c == '*' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (is_word(chars[j]) || chars[j] == '*') {
                j += 1;
            }
            out.push((Tok::Word(chars[start..j].iter().collect()), pos));
            advance(&mut i, &mut col, j - start);
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => return Err(err(pos, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') => match chars.get(j + 1) {
                        Some(&e @ ('"' | '\\')) => {
                            s.push(e);
                            j += 2;
                        }
                        _ => {
                            return Err(err(
                                Pos { line, column: col + (j - i) },
                                "invalid escape in string".into(),
                            ))
                        }
                    },
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            out.push((Tok::Str(s), pos));
            let n = j + 1 - i;
            advance(&mut i, &mut col, n);
            continue;
        }
        return Err(err(pos, format!("unexpected character '{c}'")));
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}
