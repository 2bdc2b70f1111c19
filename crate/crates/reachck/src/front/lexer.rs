//! Hand-rolled lexer for the `.rt` surface syntax.

use crate::syntax::Span;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    // keywords
    Val,
    Def,
    Assume,
    RefKw,
    NewKw,
    UnitLit,
    UnitTy,
    TopTy,
    RefTy,
    Forall,
    // punctuation
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Caret,
    Comma,
    Semi,
    Colon,
    ColonEq,
    Eq,
    FatArrow,
    ThinArrow,
    Subtype,
    Bang,
    Lambda,
    BigLambda,
    Star,
    Dot,
    Underscore,
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '/' if bytes.get(i + 1) == Some(&b'\\') => {
                out.push(Token { tok: Tok::BigLambda, span: Span::new(start, i + 2) });
                i += 2;
            }
            '\\' => {
                out.push(Token { tok: Tok::Lambda, span: Span::new(start, i + 1) });
                i += 1;
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, span: Span::new(start, i + 1) });
                i += 1;
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, span: Span::new(start, i + 1) });
                i += 1;
            }
            '[' => {
                out.push(Token { tok: Tok::LBracket, span: Span::new(start, i + 1) });
                i += 1;
            }
            ']' => {
                out.push(Token { tok: Tok::RBracket, span: Span::new(start, i + 1) });
                i += 1;
            }
            '{' => {
                out.push(Token { tok: Tok::LBrace, span: Span::new(start, i + 1) });
                i += 1;
            }
            '}' => {
                out.push(Token { tok: Tok::RBrace, span: Span::new(start, i + 1) });
                i += 1;
            }
            '^' => {
                out.push(Token { tok: Tok::Caret, span: Span::new(start, i + 1) });
                i += 1;
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, span: Span::new(start, i + 1) });
                i += 1;
            }
            ';' => {
                out.push(Token { tok: Tok::Semi, span: Span::new(start, i + 1) });
                i += 1;
            }
            '.' => {
                out.push(Token { tok: Tok::Dot, span: Span::new(start, i + 1) });
                i += 1;
            }
            '*' => {
                out.push(Token { tok: Tok::Star, span: Span::new(start, i + 1) });
                i += 1;
            }
            '!' => {
                out.push(Token { tok: Tok::Bang, span: Span::new(start, i + 1) });
                i += 1;
            }
            ':' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::ColonEq, span: Span::new(start, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Colon, span: Span::new(start, i + 1) });
                    i += 1;
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push(Token { tok: Tok::FatArrow, span: Span::new(start, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Eq, span: Span::new(start, i + 1) });
                    i += 1;
                }
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push(Token { tok: Tok::ThinArrow, span: Span::new(start, i + 2) });
                    i += 2;
                } else {
                    return Err(LexError {
                        message: "expected `->`".into(),
                        span: Span::new(start, i + 1),
                    });
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b':') {
                    out.push(Token { tok: Tok::Subtype, span: Span::new(start, i + 2) });
                    i += 2;
                } else {
                    return Err(LexError {
                        message: "expected `<:`".into(),
                        span: Span::new(start, i + 1),
                    });
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j] as char;
                    if d.is_ascii_alphanumeric() || d == '_' {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let word = &src[i..j];
                let span = Span::new(i, j);
                let tok = match word {
                    "val" => Tok::Val,
                    "def" => Tok::Def,
                    "assume" => Tok::Assume,
                    "ref" => Tok::RefKw,
                    "new" => Tok::NewKw,
                    "unit" => Tok::UnitLit,
                    "Unit" => Tok::UnitTy,
                    "Top" => Tok::TopTy,
                    "Ref" => Tok::RefTy,
                    "forall" => Tok::Forall,
                    "_" => Tok::Underscore,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push(Token { tok, span });
                i = j;
            }
            other => {
                return Err(LexError {
                    message: format!("unexpected character `{other}`"),
                    span: Span::new(start, i + 1),
                });
            }
        }
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(src.len(), src.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_core_forms() {
        let toks = lex("val x = ref unit; !x := y").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Val,
                Tok::Ident("x".into()),
                Tok::Eq,
                Tok::RefKw,
                Tok::UnitLit,
                Tok::Semi,
                Tok::Bang,
                Tok::Ident("x".into()),
                Tok::ColonEq,
                Tok::Ident("y".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn lexes_lambdas_and_types() {
        let toks = lex(r"\f(x: Ref[Unit]^{*,a}) => /\g[X^x <: Top]. x").unwrap();
        assert!(toks.iter().any(|t| t.tok == Tok::Lambda));
        assert!(toks.iter().any(|t| t.tok == Tok::BigLambda));
        assert!(toks.iter().any(|t| t.tok == Tok::Subtype));
        assert!(toks.iter().any(|t| t.tok == Tok::Star));
    }

    #[test]
    fn comments_are_skipped() {
        let toks = lex("// hello\nunit").unwrap();
        assert_eq!(toks[0].tok, Tok::UnitLit);
    }
}
