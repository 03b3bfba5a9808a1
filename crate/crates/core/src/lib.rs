//! Piecewise expanding interval maps, their one-parameter families, and
//! numerical checks for the typicality of absolutely continuous invariant
//! measures along such families.

pub mod error;
pub mod expr;
pub mod covering;
pub mod density;
pub mod expand;
pub mod family;
pub mod family_file;
pub mod gallery;
pub mod interval;
pub mod map_model;
pub mod roots;
pub mod symbolic;
pub mod typicality;

pub use error::{Error, Result};
pub use expr::{parse, Expr, ExprParseError, Var};
pub use map_model::{Branch, Cell, MapBounds, Partition, PiecewiseMap, Word};
