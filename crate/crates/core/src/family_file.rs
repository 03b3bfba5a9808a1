//! JSON family definition files.
//!
//! ```json
//! {
//!   "name": "doubling",
//!   "domain": [-1, 1],
//!   "param_interval": [-0.95, 0.95],
//!   "breakpoints": ["-1", "0", "1"],
//!   "branches": ["2*x + 1", "2*x - 1"],
//!   "point_X": "a",
//!   "lipschitz": 0
//! }
//! ```
//!
//! Breakpoints and `point_X` are expressions in `a`; branches are
//! expressions in `x` and `a`. Plain numbers are accepted wherever an
//! expression is expected. Unknown keys are rejected.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error as MapError;
use crate::expr::{parse, Expr, Var};
use crate::family::{MapFamily, MapSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyFileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: in {field}: {message}")]
    Expression {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Semantic(#[from] MapError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ExprText {
    Number(f64),
    Text(String),
}

impl ExprText {
    fn source(&self) -> String {
        match self {
            ExprText::Number(v) => format!("{v}"),
            ExprText::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    domain: [f64; 2],
    param_interval: [f64; 2],
    breakpoints: Vec<ExprText>,
    branches: Vec<ExprText>,
    #[serde(rename = "point_X")]
    point_x: ExprText,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// Finds expression literals in order of appearance after a key.
struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn key(&self, key: &str) -> usize {
        self.text.find(&format!("\"{key}\"")).unwrap_or(0)
    }

    /// Byte offset of the first character inside the literal for `src`
    /// found at or after `from`, and the offset just past it.
    fn literal(&self, src: &str, from: usize) -> Option<(usize, usize)> {
        let lit = serde_json::to_string(src).ok()?;
        let at = self.text[from..].find(&lit)? + from;
        Some((at + 1, at + lit.len()))
    }
}

fn parse_exprs(
    text: &str,
    key: &str,
    items: &[ExprText],
    allowed: &[Var],
) -> Result<Vec<Arc<Expr>>, FamilyFileError> {
    let loc = Locator { text };
    let mut cursor = loc.key(key);
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let src = item.source();
        let field = if items.len() == 1 && key == "point_X" {
            key.to_string()
        } else {
            format!("{key}[{i}]")
        };
        let start = match item {
            ExprText::Text(_) => loc.literal(&src, cursor),
            ExprText::Number(_) => None,
        };
        if let Some((_, end)) = start {
            cursor = end;
        }
        let at = |offset: usize, message: String| {
            let (line, column) = line_col(text, start.map_or(cursor, |s| s.0) + offset);
            FamilyFileError::Expression {
                field: field.clone(),
                line,
                column,
                message,
            }
        };
        let e = parse(&src).map_err(|e| at(e.offset, e.message))?;
        for var in [Var::X, Var::A] {
            if e.depends_on(var) && !allowed.contains(&var) {
                let name = if var == Var::X { "x" } else { "a" };
                return Err(at(0, format!("may not depend on {name}")));
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Parse the document into a [`MapSpec`] without building the family.
pub fn parse_spec(text: &str) -> Result<MapSpec, FamilyFileError> {
    let doc: FamilyDoc = serde_json::from_str(text).map_err(|e| FamilyFileError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let breakpoints = parse_exprs(text, "breakpoints", &doc.breakpoints, &[Var::A])?;
    let branches = parse_exprs(text, "branches", &doc.branches, &[Var::X, Var::A])?;
    let point_x = parse_exprs(text, "point_X", std::slice::from_ref(&doc.point_x), &[Var::A])?
        .pop()
        .expect("one expression");
    Ok(MapSpec {
        name: doc.name,
        domain: (doc.domain[0], doc.domain[1]),
        param_interval: (doc.param_interval[0], doc.param_interval[1]),
        breakpoints,
        branches,
        point_x,
        lipschitz: doc.lipschitz,
    })
}

/// Parse and audit a family definition.
pub fn parse_family_file(text: &str) -> Result<MapFamily, FamilyFileError> {
    Ok(MapFamily::new(parse_spec(text)?)?)
}

/// Serialize a spec; parsing the result reproduces identical expression trees.
pub fn spec_to_json(spec: &MapSpec) -> String {
    let text = |e: &Arc<Expr>| ExprText::Text(e.to_string());
    let doc = FamilyDoc {
        name: spec.name.clone(),
        domain: [spec.domain.0, spec.domain.1],
        param_interval: [spec.param_interval.0, spec.param_interval.1],
        breakpoints: spec.breakpoints.iter().map(text).collect(),
        branches: spec.branches.iter().map(text).collect(),
        point_x: text(&spec.point_x),
        lipschitz: spec.lipschitz,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    s.push('\n');
    s
}
