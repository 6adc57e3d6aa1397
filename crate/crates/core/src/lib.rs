//! Recursive neural networks over expression trees for verifying and
//! completing mathematical identities.
//!
//! See the [`guide`] for a tour; every code block in it runs as a test.

pub mod autodiff;
pub mod cells;
pub mod cli;
pub mod eval;
pub mod expr;
pub mod model;
pub mod seeds;
pub mod stack;
pub mod train;

/// The chapters of the book under `book/src`, compiled here so that
/// `cargo test` runs their snippets.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    pub mod expressions {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub mod autodiff {}
    #[doc = include_str!("../../../book/src/cells.md")]
    pub mod cells {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
