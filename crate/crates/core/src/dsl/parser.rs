//! Recursive-descent parser for SmellDSL.
//!
//! ```text
//! script     := definition+
//! definition := "smell" IDENT "{" ["severity" SEV] "when" expr "}"
//! expr       := and_expr ("or" and_expr)*
//! and_expr   := unary ("and" unary)*
//! unary      := "not" unary | "(" expr ")" | comparison
//! comparison := operand CMP operand
//! operand    := IDENT | "$" IDENT | NUMBER
//! ```
//!
//! On a syntax error the parser records a diagnostic and resynchronizes at the
//! next `smell` keyword, so one pass reports errors from every definition.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Operand, Severity, SmellDefinition, SmellScript};
use super::lexer::{tokenize, SourcePos, Token, TokenKind};

/// Nesting limit for `not` and parentheses.
pub const MAX_NESTING: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DiagnosticKind {
    Syntax,
    DuplicateDefinition,
    EmptyScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: DiagnosticKind,
}

impl ParseDiagnostic {
    fn new(pos: SourcePos, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        ParseDiagnostic { line: pos.line, column: pos.column, message: message.into(), kind }
    }

    pub fn pos(&self) -> SourcePos {
        SourcePos { line: self.line, column: self.column }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Where names were referenced in the source, in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub definitions: Vec<(String, SourcePos)>,
    pub metrics: Vec<(String, SourcePos)>,
    pub thresholds: Vec<(String, SourcePos)>,
}

impl SourceMap {
    pub fn first_metric(&self, name: &str) -> Option<SourcePos> {
        first(&self.metrics, name)
    }

    pub fn first_threshold(&self, name: &str) -> Option<SourcePos> {
        first(&self.thresholds, name)
    }
}

fn first(list: &[(String, SourcePos)], name: &str) -> Option<SourcePos> {
    list.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
}

pub fn parse_script(source: &str) -> Result<SmellScript, Vec<ParseDiagnostic>> {
    parse_script_with_map(source).map(|(script, _)| script)
}

/// Like [`parse_script`], also returning reference positions.
pub fn parse_script_with_map(source: &str) -> Result<(SmellScript, SourceMap), Vec<ParseDiagnostic>> {
    let partial = parse_partial(source);
    if !partial.diagnostics.is_empty() {
        return Err(partial.diagnostics);
    }
    let script = SmellScript::new(partial.definitions).expect("non-empty and unique names checked by the parser");
    Ok((script, partial.map))
}

/// Outcome of a best-effort parse: the definitions that parsed cleanly, the
/// references they make, and every diagnostic found.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialParse {
    pub definitions: Vec<SmellDefinition>,
    pub map: SourceMap,
    pub diagnostics: Vec<ParseDiagnostic>,
}

pub fn parse_partial(source: &str) -> PartialParse {
    let (tokens, lex_errors) = tokenize(source);
    if !lex_errors.is_empty() {
        return PartialParse {
            definitions: Vec::new(),
            map: SourceMap::default(),
            diagnostics: lex_errors
                .into_iter()
                .map(|e| ParseDiagnostic::new(e.pos, DiagnosticKind::Syntax, e.message))
                .collect(),
        };
    }
    if tokens.len() == 1 {
        return PartialParse {
            definitions: Vec::new(),
            map: SourceMap::default(),
            diagnostics: vec![ParseDiagnostic::new(
                tokens[0].pos,
                DiagnosticKind::EmptyScript,
                "script contains no smell definitions",
            )],
        };
    }

    let mut parser = Parser { tokens, index: 0, depth: 0, map: SourceMap::default() };
    let mut definitions = Vec::new();
    let mut diagnostics = Vec::new();

    while !parser.at(&TokenKind::Eof) {
        let start = parser.index;
        let marks = (parser.map.metrics.len(), parser.map.thresholds.len());
        match parser.definition() {
            Ok(def) => definitions.push(def),
            Err(diag) => {
                diagnostics.push(diag);
                parser.map.metrics.truncate(marks.0);
                parser.map.thresholds.truncate(marks.1);
                parser.recover(start);
            }
        }
    }

    let mut seen: BTreeMap<&str, SourcePos> = BTreeMap::new();
    for (name, pos) in &parser.map.definitions {
        if let Some(prev) = seen.get(name.as_str()) {
            diagnostics.push(ParseDiagnostic::new(
                *pos,
                DiagnosticKind::DuplicateDefinition,
                format!("smell `{name}` is already defined at {}:{}", prev.line, prev.column),
            ));
        } else {
            seen.insert(name, *pos);
        }
    }
    diagnostics.sort_by_key(|d| (d.line, d.column));
    PartialParse { definitions, map: parser.map, diagnostics }
}

/// First `smell NAME` in the source, even when the rest does not parse.
pub fn first_smell_name(source: &str) -> Option<String> {
    let (tokens, _) = tokenize(source);
    tokens.windows(2).find_map(|w| match (&w[0].kind, &w[1].kind) {
        (TokenKind::Smell, TokenKind::Ident(name)) => Some(name.clone()),
        _ => None,
    })
}

type PResult<T> = Result<T, ParseDiagnostic>;

struct Parser {
    tokens: Vec<Token>,
    index: usize,
    depth: usize,
    map: SourceMap,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.index]
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.index].clone();
        if tok.kind != TokenKind::Eof {
            self.index += 1;
        }
        tok
    }

    fn error_here(&self, expected: &str) -> ParseDiagnostic {
        let tok = self.peek();
        ParseDiagnostic::new(
            tok.pos,
            DiagnosticKind::Syntax,
            format!("expected {expected}, found {}", tok.kind.describe()),
        )
    }

    fn expect(&mut self, kind: TokenKind, expected: &str) -> PResult<Token> {
        if self.at(&kind) {
            Ok(self.advance())
        } else {
            Err(self.error_here(expected))
        }
    }

    /// Skips to the next `smell` keyword after the failed definition's start.
    fn recover(&mut self, start: usize) {
        self.depth = 0;
        if self.index == start {
            self.advance();
        }
        while !self.at(&TokenKind::Smell) && !self.at(&TokenKind::Eof) {
            self.advance();
        }
    }

    fn definition(&mut self) -> PResult<SmellDefinition> {
        self.expect(TokenKind::Smell, "`smell`")?;
        let name_tok = self.peek().clone();
        let name = match name_tok.kind {
            TokenKind::Ident(name) => {
                self.advance();
                name
            }
            _ => return Err(self.error_here("a smell name")),
        };
        self.expect(TokenKind::LBrace, "`{`")?;

        let severity = if self.at(&TokenKind::Severity) {
            self.advance();
            let tok = self.peek().clone();
            match &tok.kind {
                TokenKind::Ident(word) => match word.parse::<Severity>() {
                    Ok(sev) => {
                        self.advance();
                        sev
                    }
                    Err(e) => return Err(ParseDiagnostic::new(tok.pos, DiagnosticKind::Syntax, e.to_string())),
                },
                _ => return Err(self.error_here("a severity (low, medium, high or critical)")),
            }
        } else {
            Severity::default()
        };

        self.expect(TokenKind::When, "`when`")?;
        let condition = self.expr()?;
        self.expect(TokenKind::RBrace, "`}` or a boolean operator")?;
        self.map.definitions.push((name.clone(), name_tok.pos));
        Ok(SmellDefinition { name, severity, condition })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut children = vec![self.and_expr()?];
        while self.at(&TokenKind::Or) {
            self.advance();
            children.push(self.and_expr()?);
        }
        Ok(Expr::or(children))
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut children = vec![self.unary()?];
        while self.at(&TokenKind::And) {
            self.advance();
            children.push(self.unary()?);
        }
        Ok(Expr::and(children))
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek().kind {
            TokenKind::Not => {
                let tok = self.advance();
                self.nested(tok.pos, |p| p.unary().map(Expr::not))
            }
            TokenKind::LParen => {
                let tok = self.advance();
                self.nested(tok.pos, |p| {
                    let inner = p.expr()?;
                    p.expect(TokenKind::RParen, "`)`")?;
                    Ok(inner)
                })
            }
            _ => self.comparison(),
        }
    }

    fn nested(&mut self, pos: SourcePos, f: impl FnOnce(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        if self.depth >= MAX_NESTING {
            return Err(ParseDiagnostic::new(
                pos,
                DiagnosticKind::Syntax,
                format!("expression nested more than {MAX_NESTING} levels deep"),
            ));
        }
        self.depth += 1;
        let out = f(self);
        self.depth -= 1;
        out
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.operand()?;
        let op = match self.peek().kind {
            TokenKind::Cmp(op) => {
                self.advance();
                op
            }
            _ => return Err(self.error_here("a comparison operator")),
        };
        let rhs = self.operand()?;
        if let TokenKind::Cmp(_) = self.peek().kind {
            let tok = self.peek();
            return Err(ParseDiagnostic::new(
                tok.pos,
                DiagnosticKind::Syntax,
                "comparisons cannot be chained; combine them with `and`",
            ));
        }
        Ok(Expr::compare(lhs, op, rhs))
    }

    fn operand(&mut self) -> PResult<Operand> {
        let tok = self.peek().clone();
        let operand = match tok.kind {
            TokenKind::Ident(name) => {
                self.map.metrics.push((name.clone(), tok.pos));
                Operand::MetricRef(name)
            }
            TokenKind::Threshold(name) => {
                self.map.thresholds.push((name.clone(), tok.pos));
                Operand::ThresholdRef(name)
            }
            TokenKind::Number(value) => Operand::Literal(value),
            _ => return Err(self.error_here("a metric, `$THRESHOLD` or number")),
        };
        self.advance();
        Ok(operand)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::CmpOp;

    const GOD_CLASS: &str =
        "smell GodClass { severity high when wmc >= $WMC_VERY_HIGH and atfd > $FEW and tcc < $ONE_THIRD }";

    fn metric(n: &str) -> Operand {
        Operand::MetricRef(n.into())
    }
    fn threshold(n: &str) -> Operand {
        Operand::ThresholdRef(n.into())
    }

    #[test]
    fn parses_god_class() {
        let script = parse_script(GOD_CLASS).unwrap();
        assert_eq!(script.definitions().len(), 1);
        let def = &script.definitions()[0];
        assert_eq!(def.name, "GodClass");
        assert_eq!(def.severity, Severity::High);
        assert_eq!(
            def.condition,
            Expr::And(vec![
                Expr::compare(metric("wmc"), CmpOp::Ge, threshold("WMC_VERY_HIGH")),
                Expr::compare(metric("atfd"), CmpOp::Gt, threshold("FEW")),
                Expr::compare(metric("tcc"), CmpOp::Lt, threshold("ONE_THIRD")),
            ])
        );
    }

    #[test]
    fn empty_and_comment_only_scripts() {
        for src in ["", "  \n\t", "# nothing here\n"] {
            let diags = parse_script(src).unwrap_err();
            assert_eq!(diags.len(), 1);
            assert_eq!(diags[0].kind, DiagnosticKind::EmptyScript);
        }
    }

    #[test]
    fn duplicate_definition() {
        let diags = parse_script("smell A { when x > 1 } smell A { when y > 2 }").unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::DuplicateDefinition);
        assert!(diags[0].message.contains("`A`"));
        assert_eq!((diags[0].line, diags[0].column), (1, 30));
    }

    #[test]
    fn default_severity_is_medium() {
        let script = parse_script("smell A { when x > 1 }").unwrap();
        assert_eq!(script.definitions()[0].severity, Severity::Medium);
    }

    #[test]
    fn precedence_not_and_or() {
        let script = parse_script("smell A { when not a > 1 and b > 2 or c > 3 }").unwrap();
        let cmp = |m: &str, v: f64| Expr::compare(metric(m), CmpOp::Gt, Operand::Literal(v));
        assert_eq!(
            script.definitions()[0].condition,
            Expr::Or(vec![
                Expr::And(vec![Expr::not(cmp("a", 1.0)), cmp("b", 2.0)]),
                cmp("c", 3.0),
            ])
        );
    }

    #[test]
    fn parens_keep_nesting() {
        let script = parse_script("smell A { when (a > 1 and b > 2) and c > 3 }").unwrap();
        match &script.definitions()[0].condition {
            Expr::And(children) => {
                assert_eq!(children.len(), 2);
                assert!(matches!(children[0], Expr::And(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chained_comparison_is_rejected() {
        let diags = parse_script("smell A { when 1 < x < 3 }").unwrap_err();
        assert_eq!(diags[0].kind, DiagnosticKind::Syntax);
        assert_eq!(diags[0].column, 22);
    }

    #[test]
    fn unbalanced_parens() {
        let diags = parse_script("smell A { when (x > 1 }").unwrap_err();
        assert!(diags[0].message.contains("`)`"), "{}", diags[0].message);
        assert!(parse_script("smell A { when x > 1) }").is_err());
    }

    #[test]
    fn recovers_and_reports_each_broken_definition() {
        let src = "smell A { when x > }\nsmell B { when y > 1 }\nsmell C { severity huge when z > 1 }";
        let diags = parse_script(src).unwrap_err();
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].line, 1);
        assert_eq!(diags[1].line, 3);
        assert!(diags[1].message.contains("huge"));

        // a definition cut short by the next `smell` keyword does not swallow it
        let diags = parse_script("smell A { when x >\nsmell B { when y >> 1 }").unwrap_err();
        assert_eq!(diags.len(), 2, "{diags:?}");
        assert_eq!(diags[1].line, 2);
    }

    #[test]
    fn keywords_are_not_names() {
        assert!(parse_script("smell and { when x > 1 }").is_err());
        assert!(parse_script("smell A { when or > 1 }").is_err());
    }

    #[test]
    fn deep_nesting_is_a_diagnostic_not_a_crash() {
        let src = format!("smell A {{ when {}x > 1 }}", "not ".repeat(10_000));
        let diags = parse_script(&src).unwrap_err();
        assert!(diags[0].message.contains("nested"));
        let src = format!("smell A {{ when {}x > 1{} }}", "(".repeat(5_000), ")".repeat(5_000));
        assert!(parse_script(&src).is_err());
        let ok = format!("smell A {{ when {}x > 1 }}", "not ".repeat(MAX_NESTING));
        assert!(parse_script(&ok).is_ok());
    }

    #[test]
    fn source_map_tracks_references() {
        let (_, map) = parse_script_with_map(GOD_CLASS).unwrap();
        assert_eq!(map.first_metric("wmc"), Some(SourcePos { line: 1, column: 37 }));
        assert_eq!(map.first_threshold("FEW"), Some(SourcePos { line: 1, column: 70 }));
        assert_eq!(map.definitions[0].0, "GodClass");
    }

    #[test]
    fn sniffs_name_from_broken_script() {
        assert_eq!(first_smell_name("smell Broken { when x > }"), Some("Broken".into()));
        assert_eq!(first_smell_name("oops"), None);
    }
}
