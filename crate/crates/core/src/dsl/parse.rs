//! Hand-rolled line parser with positional error reporting.

use std::collections::{BTreeMap, BTreeSet};

use super::{ChannelDecl, Decl, FuseOp, ParamValue, PipelineAst, Prim, RoundDecl};
use crate::error::{Error, Result};

struct Scanner<'s> {
    chars: Vec<char>,
    at: usize,
    line: usize,
    _src: &'s str,
}

#[derive(Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Equals,
    End,
}

impl<'s> Scanner<'s> {
    fn new(line_text: &'s str, line: usize) -> Self {
        Scanner {
            chars: line_text.chars().collect(),
            at: 0,
            line,
            _src: line_text,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::DslParse {
            line: self.line,
            column: self.at + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.at < self.chars.len() && self.chars[self.at].is_whitespace() {
            self.at += 1;
        }
    }

    fn next_tok(&mut self) -> Result<Tok> {
        self.skip_ws();
        let Some(&c) = self.chars.get(self.at) else {
            return Ok(Tok::End);
        };
        match c {
            '(' => {
                self.at += 1;
                Ok(Tok::LParen)
            }
            ')' => {
                self.at += 1;
                Ok(Tok::RParen)
            }
            ',' => {
                self.at += 1;
                Ok(Tok::Comma)
            }
            '=' => {
                self.at += 1;
                Ok(Tok::Equals)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.at;
                while self
                    .chars
                    .get(self.at)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
                {
                    self.at += 1;
                }
                Ok(Tok::Ident(self.chars[start..self.at].iter().collect()))
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' => {
                let start = self.at;
                self.at += 1;
                while self
                    .chars
                    .get(self.at)
                    .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+'))
                {
                    self.at += 1;
                }
                let text: String = self.chars[start..self.at].iter().collect();
                text.parse::<f64>()
                    .map(Tok::Number)
                    .map_err(|e| self.error(format!("bad number {text:?}: {e}")))
            }
            other => Err(self.error(format!("unexpected character {other:?}"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String> {
        match self.next_tok()? {
            Tok::Ident(s) => Ok(s),
            other => Err(self.error(format!("expected {what}, found {other:?}"))),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        let got = self.next_tok()?;
        if got != tok {
            return Err(self.error(format!("expected {what}, found {got:?}")));
        }
        Ok(())
    }
}

/// Names referenced in a comma-separated arg list: `( NAME ("," NAME)* )`.
fn parse_args(sc: &mut Scanner) -> Result<Vec<String>> {
    sc.expect(Tok::LParen, "'('")?;
    let mut args = Vec::new();
    loop {
        match sc.next_tok()? {
            Tok::RParen if args.is_empty() => break,
            Tok::Ident(name) => {
                args.push(name);
                match sc.next_tok()? {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    other => return Err(sc.error(format!("expected ',' or ')', found {other:?}"))),
                }
            }
            other => return Err(sc.error(format!("expected a name, found {other:?}"))),
        }
    }
    Ok(args)
}

/// `( key "=" value ("," key "=" value)* )` with an empty list allowed.
fn parse_params(sc: &mut Scanner) -> Result<BTreeMap<String, ParamValue>> {
    sc.expect(Tok::LParen, "'('")?;
    let mut params = BTreeMap::new();
    loop {
        match sc.next_tok()? {
            Tok::RParen => break,
            Tok::Ident(key) => {
                sc.expect(Tok::Equals, "'='")?;
                let value = match sc.next_tok()? {
                    Tok::Ident(v) => ParamValue::Ident(v),
                    Tok::Number(n) => ParamValue::Number(n),
                    other => {
                        return Err(sc.error(format!("expected a value, found {other:?}")));
                    }
                };
                if params.insert(key.clone(), value).is_some() {
                    return Err(sc.error(format!("duplicate parameter {key:?}")));
                }
                match sc.next_tok()? {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    other => return Err(sc.error(format!("expected ',' or ')', found {other:?}"))),
                }
            }
            other => return Err(sc.error(format!("expected a parameter, found {other:?}"))),
        }
    }
    Ok(params)
}

const GRANULARITIES: [&str; 3] = ["sentence", "pair", "paragraph"];
const ADAPTERS: [&str; 4] = [
    "retrieval.query",
    "retrieval.passage",
    "classification",
    "text-matching",
];

fn validate_params(
    sc: &Scanner,
    prim: Prim,
    params: &BTreeMap<String, ParamValue>,
) -> Result<()> {
    for (key, value) in params {
        let ok = match (key.as_str(), value) {
            ("granularity", ParamValue::Ident(g)) => {
                matches!(prim, Prim::Maxsim | Prim::Topmean)
                    && GRANULARITIES.contains(&g.as_str())
            }
            ("adapter", ParamValue::Ident(a)) => ADAPTERS.contains(&a.as_str()),
            ("max_tokens", ParamValue::Number(n)) => *n > 0.0,
            _ => false,
        };
        if !ok {
            return Err(sc.error(format!(
                "parameter {key}={} not in the fixed constants domain for {}",
                value.render(),
                prim.as_str()
            )));
        }
    }
    Ok(())
}

/// Parse a pipeline. Comments (`#` to end of line) and blank lines are
/// ignored; every name must be declared before use; exactly one terminal
/// fuse closes the program.
pub fn parse(source: &str) -> Result<PipelineAst> {
    let mut decls: Vec<Decl> = Vec::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut fuse: Option<(FuseOp, Vec<String>, usize)> = None;

    // The baseline channel is a builtin: referencing `dense` without a
    // declaration inserts it implicitly.
    let ensure_declared = |name: &str,
                               decls: &mut Vec<Decl>,
                               names: &mut BTreeSet<String>,
                               sc: &Scanner|
     -> Result<()> {
        if names.contains(name) {
            return Ok(());
        }
        if name == "dense" {
            decls.push(Decl::Channel(ChannelDecl {
                name: "dense".into(),
                prim: Prim::Dense,
                params: BTreeMap::new(),
                implicit: true,
            }));
            names.insert("dense".into());
            return Ok(());
        }
        Err(sc.error(format!("name {name:?} referenced before declaration")))
    };

    for (lineno, raw) in source.lines().enumerate() {
        let line_text = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        if line_text.trim().is_empty() {
            continue;
        }
        let mut sc = Scanner::new(line_text, lineno + 1);
        if let Some((_, _, fuse_line)) = fuse {
            return Err(sc.error(format!(
                "line after the terminal fuse on line {fuse_line}"
            )));
        }
        let keyword = sc.expect_ident("'channel', 'round', or 'fuse'")?;
        match keyword.as_str() {
            "channel" => {
                let name = sc.expect_ident("a channel name")?;
                sc.expect(Tok::Equals, "'='")?;
                let prim_name = sc.expect_ident("a primitive")?;
                let prim = Prim::parse(&prim_name)
                    .ok_or_else(|| sc.error(format!("unknown primitive {prim_name:?}")))?;
                if !prim.is_channel() {
                    return Err(sc.error(format!(
                        "{prim_name:?} is a round primitive, not a channel"
                    )));
                }
                let params = parse_params(&mut sc)?;
                validate_params(&sc, prim, &params)?;
                if !names.insert(name.clone()) {
                    return Err(sc.error(format!("duplicate name {name:?}")));
                }
                decls.push(Decl::Channel(ChannelDecl {
                    name,
                    prim,
                    params,
                    implicit: false,
                }));
            }
            "round" => {
                let name = sc.expect_ident("a round name")?;
                sc.expect(Tok::Equals, "'='")?;
                let prim_name = sc.expect_ident("a primitive")?;
                let prim = Prim::parse(&prim_name)
                    .ok_or_else(|| sc.error(format!("unknown primitive {prim_name:?}")))?;
                if prim.is_channel() {
                    return Err(sc.error(format!(
                        "{prim_name:?} is a channel primitive, not a round"
                    )));
                }
                let args = parse_args(&mut sc)?;
                if args.is_empty() {
                    return Err(sc.error("a round needs at least one input"));
                }
                for arg in &args {
                    ensure_declared(arg, &mut decls, &mut names, &sc)?;
                }
                if !names.insert(name.clone()) {
                    return Err(sc.error(format!("duplicate name {name:?}")));
                }
                decls.push(Decl::Round(RoundDecl { name, prim, args }));
            }
            "fuse" => {
                let op_name = sc.expect_ident("a fuse operator")?;
                let op = FuseOp::parse(&op_name)
                    .ok_or_else(|| sc.error(format!("unknown fuse operator {op_name:?}")))?;
                let args = parse_args(&mut sc)?;
                if args.is_empty() {
                    return Err(sc.error("fuse needs at least one input"));
                }
                for arg in &args {
                    ensure_declared(arg, &mut decls, &mut names, &sc)?;
                }
                fuse = Some((op, args, lineno + 1));
            }
            other => {
                return Err(sc.error(format!(
                    "expected 'channel', 'round', or 'fuse', found {other:?}"
                )));
            }
        }
    }

    let (fuse_op, fuse_args, _) = fuse.ok_or(Error::DslParse {
        line: source.lines().count().max(1),
        column: 1,
        message: "missing terminal fuse".into(),
    })?;
    Ok(PipelineAst {
        decls,
        fuse_op,
        fuse_args,
    })
}
