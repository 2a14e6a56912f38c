//! Recursive-descent parser for the clause syntax.
//!
//! ```text
//! program  := clause*
//! clause   := [label "::"] atom [":-" literal ("," literal)*] "."
//! label    := NUMBER | "t" "(" (NUMBER | "_") ")"
//! literal  := ["\+"] atom
//! atom     := NAME ["(" term ("," term)* ")"]
//! term     := NAME | VARIABLE | INTEGER
//! ```
//!
//! `%` starts a comment running to the end of the line.

use std::collections::HashMap;
use std::fmt;

use crate::syntax::{Atom, Clause, Label, Literal, Program, Term};

/// Default initial value for `t(_)` labels.
pub const DEFAULT_INIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    ArityConflict {
        predicate: String,
        expected: usize,
        found: usize,
    },
    ProbabilityOutOfRange(f64),
    InitOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::ArityConflict {
                predicate,
                expected,
                found,
            } => write!(
                f,
                "predicate `{predicate}` used with arity {found}, previously {expected}"
            ),
            ParseErrorKind::ProbabilityOutOfRange(p) => {
                write!(f, "probability {p} outside [0,1]")
            }
            ParseErrorKind::InitOutOfRange(p) => {
                write!(f, "learnable initial value {p} outside (0,1)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Var(String),
    Number { value: f64, text: String },
    ColonColon,
    Neck,
    LParen,
    RParen,
    Comma,
    Dot,
    Not,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(s) | Tok::Var(s) => write!(f, "`{s}`"),
            Tok::Number { text, .. } => write!(f, "`{text}`"),
            Tok::ColonColon => f.write_str("`::`"),
            Tok::Neck => f.write_str("`:-`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Not => f.write_str("`\\+`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

fn tokenize(text: &str) -> Result<(Vec<Spanned>, (usize, usize)), ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok, len: usize, i: &mut usize, col: &mut usize| {
            toks.push(Spanned {
                tok,
                line: tl,
                col: tc,
            });
            *i += len;
            *col += len;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '.' => push(Tok::Dot, 1, &mut i, &mut col),
            ':' => match chars.get(i + 1) {
                Some(':') => push(Tok::ColonColon, 2, &mut i, &mut col),
                Some('-') => push(Tok::Neck, 2, &mut i, &mut col),
                _ => return Err(syntax(tl, tc, "expected `::` or `:-`")),
            },
            '\\' => match chars.get(i + 1) {
                Some('+') => push(Tok::Not, 2, &mut i, &mut col),
                _ => return Err(syntax(tl, tc, "expected `\\+`")),
            },
            c if c.is_ascii_digit() => {
                let start = i;
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                // A dot only continues the number when a digit follows; otherwise it ends the clause.
                if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[start..j].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| syntax(tl, tc, format!("malformed number `{text}`")))?;
                let len = j - start;
                push(Tok::Number { value, text }, len, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[start..j].iter().collect();
                let tok = if c.is_uppercase() || c == '_' {
                    Tok::Var(text)
                } else {
                    Tok::Name(text)
                };
                push(tok, j - start, &mut i, &mut col);
            }
            other => return Err(syntax(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    Ok((toks, (line, col)))
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
    arities: HashMap<String, usize>,
    next_param: usize,
    anon: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or(self.eof)
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        syntax(line, col, msg)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn program(&mut self) -> Result<Vec<Clause>, ParseError> {
        let mut clauses = Vec::new();
        while self.peek().is_some() {
            clauses.push(self.clause()?);
        }
        Ok(clauses)
    }

    fn is_learnable_label(&self) -> bool {
        matches!(self.peek(), Some(Tok::Name(n)) if n == "t")
            && self.peek_at(1) == Some(&Tok::LParen)
            && matches!(self.peek_at(2), Some(Tok::Number { .. }) | Some(Tok::Var(_)))
            && self.peek_at(3) == Some(&Tok::RParen)
            && self.peek_at(4) == Some(&Tok::ColonColon)
    }

    fn label(&mut self) -> Result<Label, ParseError> {
        let (line, col) = self.here();
        if let Some(Tok::Number { value, .. }) = self.peek() {
            let p = *value;
            self.pos += 1;
            self.expect(Tok::ColonColon, "`::` after probability")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::ProbabilityOutOfRange(p),
                });
            }
            return Ok(Label::Fixed(p));
        }
        if self.is_learnable_label() {
            let init = match &self.toks[self.pos + 2].tok {
                Tok::Number { value, .. } => *value,
                Tok::Var(v) if v == "_" => DEFAULT_INIT,
                _ => return Err(self.error("expected a number or `_` inside `t(...)`")),
            };
            let (il, ic) = (self.toks[self.pos + 2].line, self.toks[self.pos + 2].col);
            self.pos += 5;
            if !(init > 0.0 && init < 1.0) {
                return Err(ParseError {
                    line: il,
                    col: ic,
                    kind: ParseErrorKind::InitOutOfRange(init),
                });
            }
            let param = self.next_param;
            self.next_param += 1;
            return Ok(Label::Learnable { init, param });
        }
        Ok(Label::Deterministic)
    }

    fn clause(&mut self) -> Result<Clause, ParseError> {
        self.anon = 0;
        let label = self.label()?;
        let head = self.atom()?;
        let mut body = Vec::new();
        if self.peek() == Some(&Tok::Neck) {
            self.pos += 1;
            body.push(self.literal()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                body.push(self.literal()?);
            }
        }
        self.expect(Tok::Dot, "`.` at end of clause")?;
        Ok(Clause { head, body, label })
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negated = if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            true
        } else {
            false
        };
        Ok(Literal {
            atom: self.atom()?,
            negated,
        })
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let (line, col) = self.here();
        let predicate = match self.peek() {
            Some(Tok::Name(n)) => n.clone(),
            _ => return Err(self.unexpected("a predicate name")),
        };
        self.pos += 1;
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            args.push(self.term()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.term()?);
            }
            self.expect(Tok::RParen, "`)` or `,` in argument list")?;
        }
        match self.arities.get(&predicate) {
            Some(&expected) if expected != args.len() => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::ArityConflict {
                        predicate,
                        expected,
                        found: args.len(),
                    },
                })
            }
            Some(_) => {}
            None => {
                self.arities.insert(predicate.clone(), args.len());
            }
        }
        Ok(Atom { predicate, args })
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let term = match self.peek() {
            Some(Tok::Name(n)) => Term::Const(n.clone()),
            Some(Tok::Var(v)) if v == "_" => {
                let v = format!("_Anon{}", self.anon);
                self.anon += 1;
                Term::Var(v)
            }
            Some(Tok::Var(v)) => Term::Var(v.clone()),
            Some(Tok::Number { text, .. }) if text.bytes().all(|b| b.is_ascii_digit()) => {
                Term::Const(text.clone())
            }
            _ => return Err(self.unexpected("a constant or variable")),
        };
        self.pos += 1;
        Ok(term)
    }
}

/// Parses program text into clauses in source order.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let (toks, eof) = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        eof,
        arities: HashMap::new(),
        next_param: 0,
        anon: 0,
    };
    let clauses = parser.program()?;
    Ok(Program::from_clauses(clauses))
}

/// Parses a single ground atom such as `neighbor(a,b)` or `h`.
pub fn parse_ground_atom(text: &str) -> Result<Atom, ParseError> {
    let (toks, eof) = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        eof,
        arities: HashMap::new(),
        next_param: 0,
        anon: 0,
    };
    let atom = parser.atom()?;
    if parser.peek().is_some() {
        return Err(parser.unexpected("end of atom"));
    }
    if !atom.is_ground() {
        return Err(syntax(1, 1, format!("atom `{atom}` is not ground")));
    }
    Ok(atom)
}
