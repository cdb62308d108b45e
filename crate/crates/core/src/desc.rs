//! Text format for datatype definitions.
//!
//! ```text
//! # comment
//! type row   = contiguous(400, byte)
//! type plane = hvector(13, 1, 256, row)
//! type cube  = hvector(47, 1, 131072, plane)
//! commit cube
//! ```
//!
//! Constructors: `named(<kind>)`, `contiguous(n, t)`, `vector(c, l, s, t)`,
//! `hvector(c, l, s_bytes, t)` and
//! `subarray(ndims, [sizes], [subsizes], [offsets], t[, c|fortran])`.
//! A type argument is a kind name, an earlier type name or a nested
//! constructor. Without a `commit` line the last defined type is committed.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::typemodel::{ArrayOrder, NamedKind, TypeDef};

/// A parsed description file.
#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    /// Definitions in file order.
    pub types: Vec<(String, TypeDef)>,
    /// Name of the committed type.
    pub commit: String,
}

impl Description {
    pub fn committed(&self) -> &TypeDef {
        &self.types.iter().find(|(n, _)| *n == self.commit).unwrap().1
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(usize),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Tok>> {
    let err = |msg: String| Error::Parse { line, msg };
    let mut out = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | '[' | ']' | ',' | '=' => {
                chars.next();
                out.push(match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Eq,
                });
            }
            c if c.is_ascii_digit() => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    end = j + 1;
                    chars.next();
                }
                let n = s[i..end]
                    .parse()
                    .map_err(|_| err(format!("number out of range: {}", &s[i..end])))?;
                out.push(Tok::Num(n));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if !(d.is_alphanumeric() || d == '_' || d == '-' || d == '.') {
                        break;
                    }
                    end = j + d.len_utf8();
                    chars.next();
                }
                out.push(Tok::Ident(s[i..end].to_string()));
            }
            other => return Err(err(format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
    env: &'a HashMap<String, TypeDef>,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if *t == want => Ok(()),
            Some(t) => {
                let t = format!("{t:?}");
                Err(self.err(format!("expected {what}, found {t}")))
            }
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn num(&mut self) -> Result<usize> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(*n),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        self.expect(Tok::LBracket, "'['")?;
        let mut out = Vec::new();
        if self.toks.get(self.pos) == Some(&Tok::RBracket) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.num()?);
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBracket) => return Ok(out),
                _ => return Err(self.err("expected ',' or ']' in list")),
            }
        }
    }

    fn comma(&mut self) -> Result<()> {
        self.expect(Tok::Comma, "','")
    }

    fn type_expr(&mut self) -> Result<TypeDef> {
        let name = match self.next() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => return Err(self.err("expected a type")),
        };
        if self.toks.get(self.pos) != Some(&Tok::LParen) {
            if let Some(def) = self.env.get(&name) {
                return Ok(def.clone());
            }
            if let Some(kind) = NamedKind::from_name(&name) {
                return Ok(TypeDef::named(kind));
            }
            return Err(self.err(format!("undefined type `{name}`")));
        }
        self.pos += 1;
        let line = self.line;
        let wrap = |e: Error| Error::Parse {
            line,
            msg: format!("{name}: {e}"),
        };
        let def = match name.to_ascii_lowercase().as_str() {
            "named" => {
                let kind = match self.next() {
                    Some(Tok::Ident(k)) => k.clone(),
                    _ => return Err(self.err("named() takes a kind name")),
                };
                TypeDef::named(NamedKind::from_name(&kind).ok_or_else(|| self.err(format!("unknown kind `{kind}`")))?)
            }
            "contiguous" => {
                let n = self.num()?;
                self.comma()?;
                let inner = self.type_expr()?;
                TypeDef::contiguous(n, inner).map_err(wrap)?
            }
            "vector" | "hvector" => {
                let c = self.num()?;
                self.comma()?;
                let l = self.num()?;
                self.comma()?;
                let s = self.num()?;
                self.comma()?;
                let inner = self.type_expr()?;
                if name.eq_ignore_ascii_case("vector") {
                    TypeDef::vector(c, l, s, inner).map_err(wrap)?
                } else {
                    TypeDef::hvector(c, l, s, inner).map_err(wrap)?
                }
            }
            "subarray" => {
                let ndims = self.num()?;
                self.comma()?;
                let sizes = self.list()?;
                self.comma()?;
                let subsizes = self.list()?;
                self.comma()?;
                let offsets = self.list()?;
                self.comma()?;
                let inner = self.type_expr()?;
                let mut order = ArrayOrder::C;
                if self.toks.get(self.pos) == Some(&Tok::Comma) {
                    self.pos += 1;
                    order = match self.next() {
                        Some(Tok::Ident(o)) if o.eq_ignore_ascii_case("c") => ArrayOrder::C,
                        Some(Tok::Ident(o)) if o.eq_ignore_ascii_case("fortran") => ArrayOrder::Fortran,
                        _ => return Err(self.err("subarray order must be `c` or `fortran`")),
                    };
                }
                TypeDef::subarray_with_order(ndims, &sizes, &subsizes, &offsets, order, inner).map_err(wrap)?
            }
            _ => return Err(self.err(format!("unknown constructor `{name}`"))),
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(def)
    }
}

/// Parses one type expression against the given named definitions.
pub fn parse_type_expr(text: &str, env: &HashMap<String, TypeDef>) -> Result<TypeDef> {
    let toks = tokenize(text, 1)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        line: 1,
        env,
    };
    let def = p.type_expr()?;
    if p.pos != toks.len() {
        return Err(p.err("trailing input after type"));
    }
    Ok(def)
}

pub fn parse_description(text: &str) -> Result<Description> {
    let mut env: HashMap<String, TypeDef> = HashMap::new();
    let mut types: Vec<(String, TypeDef)> = Vec::new();
    let mut commit: Option<(String, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line, msg };
        let toks = tokenize(body, line)?;
        match toks.first() {
            Some(Tok::Ident(kw)) if kw == "type" => {
                let name = match toks.get(1) {
                    Some(Tok::Ident(n)) => n.clone(),
                    _ => return Err(err("expected `type <name> = <expr>`".into())),
                };
                if toks.get(2) != Some(&Tok::Eq) {
                    return Err(err("expected `=` after type name".into()));
                }
                if env.contains_key(&name) {
                    return Err(err(format!("type `{name}` defined twice")));
                }
                if NamedKind::from_name(&name).is_some() {
                    return Err(err(format!("`{name}` is a predefined kind")));
                }
                let mut p = Parser {
                    toks: &toks[3..],
                    pos: 0,
                    line,
                    env: &env,
                };
                let def = p.type_expr()?;
                if p.pos != toks.len() - 3 {
                    return Err(err("trailing input after type".into()));
                }
                env.insert(name.clone(), def.clone());
                types.push((name, def));
            }
            Some(Tok::Ident(kw)) if kw == "commit" => {
                let name = match toks.as_slice() {
                    [_, Tok::Ident(n)] => n.clone(),
                    _ => return Err(err("expected `commit <name>`".into())),
                };
                if let Some((_, first)) = &commit {
                    return Err(err(format!("second commit (first on line {first})")));
                }
                if !env.contains_key(&name) {
                    return Err(err(format!("commit of undefined type `{name}`")));
                }
                commit = Some((name, line));
            }
            _ => return Err(err("expected `type` or `commit`".into())),
        }
    }

    let commit = match commit {
        Some((name, _)) => name,
        None => match types.last() {
            Some((name, _)) => name.clone(),
            None => {
                return Err(Error::Parse {
                    line: 0,
                    msg: "no type defined".into(),
                })
            }
        },
    };
    Ok(Description { types, commit })
}
