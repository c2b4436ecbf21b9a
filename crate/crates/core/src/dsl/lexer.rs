use serde::{Deserialize, Serialize};

use super::ast::CmpOp;

/// 1-based line/column; columns count Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourcePos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    Threshold(String),
    Number(f64),
    Cmp(CmpOp),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Smell,
    Severity,
    When,
    And,
    Or,
    Not,
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Ident(name) => format!("identifier `{name}`"),
            TokenKind::Threshold(name) => format!("threshold `${name}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Cmp(op) => format!("`{}`", op.symbol()),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Smell => "keyword `smell`".into(),
            TokenKind::Severity => "keyword `severity`".into(),
            TokenKind::When => "keyword `when`".into(),
            TokenKind::And => "keyword `and`".into(),
            TokenKind::Or => "keyword `or`".into(),
            TokenKind::Not => "keyword `not`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

pub const KEYWORDS: [&str; 6] = ["smell", "severity", "when", "and", "or", "not"];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub pos: SourcePos,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LexError {
    pub pos: SourcePos,
    pub message: String,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn pos(&self) -> SourcePos {
        SourcePos { line: self.line, column: self.column }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            out.push(c);
            self.bump();
        }
        out
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokenizes the whole source. Lexing never stops early: every bad character
/// is reported and skipped, and the token stream always ends with `Eof`.
pub(crate) fn tokenize(source: &str) -> (Vec<Token>, Vec<LexError>) {
    let mut cur = Cursor { chars: source.chars().peekable(), line: 1, column: 1 };
    let mut tokens = Vec::new();
    let mut errors = Vec::new();

    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        let simple = |kind| Token { kind, pos };
        match c {
            c if c.is_whitespace() => {
                cur.bump();
            }
            '#' => {
                cur.take_while(|c| c != '\n');
            }
            '{' | '}' | '(' | ')' => {
                cur.bump();
                tokens.push(simple(match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                }));
            }
            '>' | '<' | '=' | '!' => {
                cur.bump();
                let eq = cur.peek() == Some('=');
                if eq {
                    cur.bump();
                }
                let op = match (c, eq) {
                    ('>', false) => Some(CmpOp::Gt),
                    ('>', true) => Some(CmpOp::Ge),
                    ('<', false) => Some(CmpOp::Lt),
                    ('<', true) => Some(CmpOp::Le),
                    ('=', true) => Some(CmpOp::Eq),
                    ('!', true) => Some(CmpOp::Ne),
                    _ => None,
                };
                match op {
                    Some(op) => tokens.push(simple(TokenKind::Cmp(op))),
                    None => errors.push(LexError {
                        pos,
                        message: format!("unexpected `{c}`; did you mean `{c}=`?"),
                    }),
                }
            }
            '$' => {
                cur.bump();
                if cur.peek().is_some_and(is_ident_start) {
                    let name = cur.take_while(is_ident_continue);
                    tokens.push(simple(TokenKind::Threshold(name)));
                } else {
                    errors.push(LexError {
                        pos,
                        message: "expected a threshold name directly after `$`".into(),
                    });
                }
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => match lex_number(&mut cur) {
                Ok(value) => tokens.push(simple(TokenKind::Number(value))),
                Err(message) => errors.push(LexError { pos, message }),
            },
            c if is_ident_start(c) => {
                let word = cur.take_while(is_ident_continue);
                let kind = match word.as_str() {
                    "smell" => TokenKind::Smell,
                    "severity" => TokenKind::Severity,
                    "when" => TokenKind::When,
                    "and" => TokenKind::And,
                    "or" => TokenKind::Or,
                    "not" => TokenKind::Not,
                    _ => TokenKind::Ident(word),
                };
                tokens.push(simple(kind));
            }
            other => {
                cur.bump();
                errors.push(LexError { pos, message: format!("unexpected character `{other}`") });
            }
        }
    }

    tokens.push(Token { kind: TokenKind::Eof, pos: cur.pos() });
    (tokens, errors)
}

/// `[+-]?digits(.digits)?`
fn lex_number(cur: &mut Cursor<'_>) -> Result<f64, String> {
    let mut text = String::new();
    if let Some(sign @ ('-' | '+')) = cur.peek() {
        cur.bump();
        if sign == '-' {
            text.push('-');
        }
    }
    let int_part = cur.take_while(|c| c.is_ascii_digit());
    if int_part.is_empty() {
        return Err("expected digits after sign".into());
    }
    text.push_str(&int_part);
    if cur.peek() == Some('.') {
        cur.bump();
        let frac = cur.take_while(|c| c.is_ascii_digit());
        if frac.is_empty() {
            return Err("expected digits after decimal point".into());
        }
        text.push('.');
        text.push_str(&frac);
    }
    if cur.peek().is_some_and(is_ident_continue) {
        let rest = cur.take_while(is_ident_continue);
        return Err(format!("malformed number `{text}{rest}`"));
    }
    let value: f64 = text.parse().map_err(|_| format!("malformed number `{text}`"))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("number `{text}` is out of range"))
    }
}
