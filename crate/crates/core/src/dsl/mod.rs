//! A small declarative language for fusion pipelines, so machine-proposed
//! programs arrive as parseable text instead of executable code.
//!
//! Line-oriented grammar (comments start with `#`):
//!
//! ```text
//! program   := line+
//! line      := "channel" NAME "=" PRIM "(" params? ")"
//!            | "round"   NAME "=" PRIM "(" args ")"
//!            | "fuse"    FUSEOP "(" NAME ("," NAME)* ")"
//! ```
//!
//! Channel primitives score the shortlist directly: `dense`, `maxsim`,
//! `topmean` (both with `granularity=sentence|pair|paragraph`),
//! `idf_overlap`, `bigram`, `coverage`, `rare_term`, and `bidir`. Round
//! primitives derive a new scoring pass from named inputs: `rocchio`,
//! `residual`, `expand`, `fisher`, `stability`, plus the intermediate
//! fusions `rrf`, `zmax`, and `zmean` (a round with several inputs fuses
//! them by RRF to form its base ranking). The terminal fuse is one of
//! `rrf | zmax | zmean`; fusing a single input passes its scores through
//! unchanged, which is how the trivial pipeline `fuse rrf(dense)` returns
//! the baseline bit-exactly. The name `dense` may be referenced without a
//! declaration.
//!
//! Every referenced name must be declared earlier, names are unique, and
//! exactly one fuse terminates the program. Parameter values come from the
//! fixed global constants domain; per-task tuning is not expressible.

mod compile;
mod parse;

pub use compile::{compile_source, CompiledPipeline, CostInputs};
pub use parse::parse;

use std::collections::BTreeMap;

use crate::programs::Granularity;

/// Primitive set shared by channel and round declarations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prim {
    Dense,
    Maxsim,
    Topmean,
    IdfOverlap,
    Bigram,
    Coverage,
    RareTerm,
    Rocchio,
    Residual,
    Expand,
    Fisher,
    Stability,
    Bidir,
    Rrf,
    Zmax,
    Zmean,
}

impl Prim {
    pub fn parse(s: &str) -> Option<Prim> {
        Some(match s {
            "dense" => Prim::Dense,
            "maxsim" => Prim::Maxsim,
            "topmean" => Prim::Topmean,
            "idf_overlap" => Prim::IdfOverlap,
            "bigram" => Prim::Bigram,
            "coverage" => Prim::Coverage,
            "rare_term" => Prim::RareTerm,
            "rocchio" => Prim::Rocchio,
            "residual" => Prim::Residual,
            "expand" => Prim::Expand,
            "fisher" => Prim::Fisher,
            "stability" => Prim::Stability,
            "bidir" => Prim::Bidir,
            "rrf" => Prim::Rrf,
            "zmax" => Prim::Zmax,
            "zmean" => Prim::Zmean,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Prim::Dense => "dense",
            Prim::Maxsim => "maxsim",
            Prim::Topmean => "topmean",
            Prim::IdfOverlap => "idf_overlap",
            Prim::Bigram => "bigram",
            Prim::Coverage => "coverage",
            Prim::RareTerm => "rare_term",
            Prim::Rocchio => "rocchio",
            Prim::Residual => "residual",
            Prim::Expand => "expand",
            Prim::Fisher => "fisher",
            Prim::Stability => "stability",
            Prim::Bidir => "bidir",
            Prim::Rrf => "rrf",
            Prim::Zmax => "zmax",
            Prim::Zmean => "zmean",
        }
    }

    /// True for primitives valid in a `channel` line.
    pub fn is_channel(&self) -> bool {
        matches!(
            self,
            Prim::Dense
                | Prim::Maxsim
                | Prim::Topmean
                | Prim::IdfOverlap
                | Prim::Bigram
                | Prim::Coverage
                | Prim::RareTerm
                | Prim::Bidir
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseOp {
    Rrf,
    Zmax,
    Zmean,
}

impl FuseOp {
    pub fn parse(s: &str) -> Option<FuseOp> {
        Some(match s {
            "rrf" => FuseOp::Rrf,
            "zmax" => FuseOp::Zmax,
            "zmean" => FuseOp::Zmean,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FuseOp::Rrf => "rrf",
            FuseOp::Zmax => "zmax",
            FuseOp::Zmean => "zmean",
        }
    }
}

/// Parameter value: a number or a bare identifier from the constants
/// domain (adapter or granularity names).
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Ident(String),
}

impl ParamValue {
    fn render(&self) -> String {
        match self {
            ParamValue::Number(n) => format!("{n}"),
            ParamValue::Ident(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub name: String,
    pub prim: Prim,
    pub params: BTreeMap<String, ParamValue>,
    /// Auto-inserted builtin (`dense` referenced without declaration); the
    /// printer omits it.
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundDecl {
    pub name: String,
    pub prim: Prim,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Channel(ChannelDecl),
    Round(RoundDecl),
}

impl Decl {
    pub fn name(&self) -> &str {
        match self {
            Decl::Channel(c) => &c.name,
            Decl::Round(r) => &r.name,
        }
    }
}

/// Parsed pipeline: declarations in source order plus the terminal fuse.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineAst {
    pub decls: Vec<Decl>,
    pub fuse_op: FuseOp,
    pub fuse_args: Vec<String>,
}

impl PipelineAst {
    /// Granularity of a `maxsim`/`topmean` channel; absent params default to
    /// sentences.
    pub(crate) fn granularity_of(params: &BTreeMap<String, ParamValue>) -> Granularity {
        match params.get("granularity") {
            Some(ParamValue::Ident(g)) if g == "pair" => Granularity::Pair,
            Some(ParamValue::Ident(g)) if g == "paragraph" => Granularity::Paragraph,
            _ => Granularity::Sentence,
        }
    }

}

/// Pretty-print in canonical form: `parse(round_trip(ast))` is structurally
/// equal to `ast`, and printing is idempotent after one pass.
pub fn round_trip(ast: &PipelineAst) -> String {
    let mut out = String::new();
    for decl in &ast.decls {
        match decl {
            Decl::Channel(c) => {
                if c.implicit {
                    continue;
                }
                let params: Vec<String> = c
                    .params
                    .iter()
                    .map(|(k, v)| format!("{k}={}", v.render()))
                    .collect();
                out.push_str(&format!(
                    "channel {} = {}({})\n",
                    c.name,
                    c.prim.as_str(),
                    params.join(", ")
                ));
            }
            Decl::Round(r) => {
                out.push_str(&format!(
                    "round {} = {}({})\n",
                    r.name,
                    r.prim.as_str(),
                    r.args.join(", ")
                ));
            }
        }
    }
    out.push_str(&format!(
        "fuse {}({})\n",
        ast.fuse_op.as_str(),
        ast.fuse_args.join(", ")
    ));
    out
}
