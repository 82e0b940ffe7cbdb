//! Guest language frontends.

pub mod minicalc;
pub mod toylang;
