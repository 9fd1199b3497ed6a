use crate::error::{ParseError, SourceSpan};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Slash,
    Implies,
    Arrow,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Implies => "`:-`".into(),
            Tok::Arrow => "`=>`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let span = SourceSpan::new(line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = single {
            bump!();
            out.push(Token { tok, span });
            continue;
        }
        if c == ':' && chars.get(i + 1) == Some(&'-') {
            bump!();
            bump!();
            out.push(Token {
                tok: Tok::Implies,
                span,
            });
            continue;
        }
        if c == '=' && chars.get(i + 1) == Some(&'>') {
            bump!();
            bump!();
            out.push(Token {
                tok: Tok::Arrow,
                span,
            });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                let Some(&c) = chars.get(i) else {
                    return Err(ParseError::new(span, "unterminated string"));
                };
                match c {
                    '"' => {
                        bump!();
                        break;
                    }
                    '\\' => {
                        bump!();
                        let esc = chars.get(i).copied();
                        let decoded = match esc {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => {
                                return Err(ParseError::new(
                                    SourceSpan::new(line, col),
                                    "invalid escape sequence",
                                ))
                            }
                        };
                        bump!();
                        s.push(decoded);
                    }
                    '\n' => return Err(ParseError::new(span, "unterminated string")),
                    c => {
                        s.push(c);
                        bump!();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                span,
            });
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts_number {
            let start = i;
            bump!();
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while i < j {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let value: f64 = lexeme
                .parse()
                .map_err(|_| ParseError::new(span.clone(), format!("malformed number {lexeme}")))?;
            if !value.is_finite() {
                return Err(ParseError::new(span, format!("number {lexeme} is not finite")));
            }
            out.push(Token {
                tok: Tok::Number(value),
                span,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        return Err(ParseError::new(span, format!("unexpected character {c:?}")));
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_statement_dots() {
        let toks: Vec<Tok> = tokenize("Trig(x, 1). City(\"Napa\", 0.03).")
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect();
        assert!(toks.contains(&Tok::Number(1.0)));
        assert!(toks.contains(&Tok::Number(0.03)));
        assert_eq!(toks.iter().filter(|t| **t == Tok::Dot).count(), 2);
    }

    #[test]
    fn comments_and_spans() {
        let toks = tokenize("// header\n  R(x) :- S(x).").unwrap();
        assert_eq!(toks[0].span, SourceSpan::new(2, 3));
    }

    #[test]
    fn bad_character() {
        let e = tokenize("R(x) ? S(x).").unwrap_err();
        assert_eq!(e.span, SourceSpan::new(1, 6));
    }
}
