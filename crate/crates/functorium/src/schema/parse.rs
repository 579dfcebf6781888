//! Recursive-descent parser for the schema DSL.
//!
//! ```text
//! schema <Name> {
//!   objects: <id> ("," <id>)*
//!   arrows:  <id> ":" <id> "->" <id> ("," <id> ":" <id> "->" <id>)*
//!   equations: <path> "=" <path> ("," <path> "=" <path>)*
//! }
//! path := "id_" <object-id> | <arrow-id> ("." <arrow-id>)*
//! ```
//!
//! `g . f` denotes "f, then g". Whitespace and newlines are insignificant;
//! `#` starts a line comment. The `arrows` and `equations` sections may be
//! omitted.

use super::{Arrow, Path, Relation, Schema, SchemaGraph};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    Colon,
    Comma,
    Dot,
    Eq,
    ArrowTo, // "->"
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::ArrowTo => "`->`".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    while let Some(&c) = chars.peek() {
        let (l, co) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                bump(&mut chars);
                if c == '\n' {
                    break;
                }
            }
            continue;
        }
        let tok = match c {
            '{' => {
                bump(&mut chars);
                Tok::LBrace
            }
            '}' => {
                bump(&mut chars);
                Tok::RBrace
            }
            ':' => {
                bump(&mut chars);
                Tok::Colon
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            '.' => {
                bump(&mut chars);
                Tok::Dot
            }
            '=' => {
                bump(&mut chars);
                Tok::Eq
            }
            '-' => {
                bump(&mut chars);
                match chars.peek() {
                    Some('>') => {
                        bump(&mut chars);
                        Tok::ArrowTo
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: l,
                            col: co,
                            msg: "expected `->`".into(),
                        })
                    }
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            other => {
                return Err(Error::Parse {
                    line: l,
                    col: co,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        toks.push(Spanned {
            tok,
            line: l,
            col: co,
        });
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn err_here(&self, msg: impl Into<String>) -> Error {
        let (line, col) = match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        };
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn next(&mut self, expected: &str) -> Result<Spanned> {
        match self.toks.get(self.pos) {
            Some(s) => {
                self.pos += 1;
                Ok(s.clone())
            }
            None => Err(self.err_here(format!("expected {expected}, found end of input"))),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        let got = self.next(&tok.describe())?;
        if got.tok == tok {
            Ok(())
        } else {
            Err(Error::Parse {
                line: got.line,
                col: got.col,
                msg: format!("expected {}, found {}", tok.describe(), got.tok.describe()),
            })
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize)> {
        let got = self.next(what)?;
        match got.tok {
            Tok::Ident(s) => Ok((s, got.line, got.col)),
            other => Err(Error::Parse {
                line: got.line,
                col: got.col,
                msg: format!("expected {what}, found {}", other.describe()),
            }),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let (s, line, col) = self.ident(&format!("`{word}`"))?;
        if s == word {
            Ok(())
        } else {
            Err(Error::Parse {
                line,
                col,
                msg: format!("expected `{word}`, found `{s}`"),
            })
        }
    }

    /// True when the upcoming tokens are `<word> :`.
    fn at_section(&self, word: &str) -> bool {
        matches!(self.toks.get(self.pos), Some(Spanned { tok: Tok::Ident(s), .. }) if s == word)
            && matches!(
                self.toks.get(self.pos + 1),
                Some(Spanned {
                    tok: Tok::Colon,
                    ..
                })
            )
    }

    /// Parses one path in DSL order and returns arrows in application order.
    fn path(&mut self) -> Result<(RawPath, usize, usize)> {
        let (first, line, col) = self.ident("a path")?;
        if let Some(object) = first.strip_prefix("id_") {
            return Ok((RawPath::Identity(object.to_string()), line, col));
        }
        let mut names = vec![first];
        while self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            let (n, ..) = self.ident("an arrow name")?;
            names.push(n);
        }
        names.reverse(); // DSL order g.f -> application order [f, g]
        Ok((RawPath::Arrows(names), line, col))
    }
}

enum RawPath {
    Identity(String),
    Arrows(Vec<String>),
}

fn resolve_path(graph: &SchemaGraph, raw: RawPath, line: usize, col: usize) -> Result<Path> {
    let located = |e: Error| match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line,
            col,
            msg: other.to_string(),
        },
    };
    match raw {
        RawPath::Identity(object) => {
            if !graph.has_object(&object) {
                return Err(Error::Parse {
                    line,
                    col,
                    msg: format!("unknown object `{object}` in identity path"),
                });
            }
            Ok(Path::identity(object))
        }
        RawPath::Arrows(names) => Path::from_arrows(graph, names).map_err(located),
    }
}

/// Parses and validates a schema from DSL text.
pub fn parse_schema(text: &str) -> Result<Schema> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };

    p.keyword("schema")?;
    let (name, ..) = p.ident("a schema name")?;
    p.expect(Tok::LBrace)?;

    p.keyword("objects")?;
    p.expect(Tok::Colon)?;
    let mut objects = Vec::new();
    loop {
        let (o, ..) = p.ident("an object name")?;
        objects.push(o);
        if p.peek() == Some(&Tok::Comma) {
            p.pos += 1;
        } else {
            break;
        }
    }

    let mut arrows = Vec::new();
    if p.at_section("arrows") {
        p.keyword("arrows")?;
        p.expect(Tok::Colon)?;
        loop {
            let (name, ..) = p.ident("an arrow name")?;
            p.expect(Tok::Colon)?;
            let (source, sl, sc) = p.ident("a source object")?;
            p.expect(Tok::ArrowTo)?;
            let (target, tl, tc) = p.ident("a target object")?;
            if !objects.contains(&source) {
                return Err(Error::Parse {
                    line: sl,
                    col: sc,
                    msg: format!("unknown object `{source}`"),
                });
            }
            if !objects.contains(&target) {
                return Err(Error::Parse {
                    line: tl,
                    col: tc,
                    msg: format!("unknown object `{target}`"),
                });
            }
            arrows.push(Arrow {
                name,
                source,
                target,
            });
            if p.peek() == Some(&Tok::Comma) {
                p.pos += 1;
            } else {
                break;
            }
        }
    }

    let graph = SchemaGraph::new(objects, arrows)?;

    let mut relations = Vec::new();
    if p.at_section("equations") {
        p.keyword("equations")?;
        p.expect(Tok::Colon)?;
        loop {
            let (lhs_raw, ll, lc) = p.path()?;
            p.expect(Tok::Eq)?;
            let (rhs_raw, rl, rc) = p.path()?;
            let lhs = resolve_path(&graph, lhs_raw, ll, lc)?;
            let rhs = resolve_path(&graph, rhs_raw, rl, rc)?;
            let rel = Relation::new(&graph, lhs, rhs).map_err(|e| Error::Parse {
                line: ll,
                col: lc,
                msg: e.to_string(),
            })?;
            let _ = (rl, rc);
            relations.push(rel);
            if p.peek() == Some(&Tok::Comma) {
                p.pos += 1;
            } else {
                break;
            }
        }
    }

    p.expect(Tok::RBrace)?;
    if let Some(extra) = p.toks.get(p.pos) {
        return Err(Error::Parse {
            line: extra.line,
            col: extra.col,
            msg: format!("unexpected {} after schema body", extra.tok.describe()),
        });
    }

    Schema::new(name, graph, relations)
}
