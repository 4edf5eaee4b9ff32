//! A normalizing compiler front-end for a higher-order nested relational
//! calculus with mixed set and bag semantics.
//!
//! The pipeline: parse ([`parse`]) → type-check ([`typing`]) → normalize
//! ([`rewrite`]) → either evaluate in-memory ([`eval`]), translate to SQL
//! ([`sqlgen`]), or erase the bag fragment onto the set calculus
//! ([`erase`]). The [`meta`] module makes the rewriting theory itself
//! executable — contexts, instantiation, continuations, measures, and
//! reduction classification — and [`gen`] produces seeded random well-typed
//! terms for the test suites in [`suites`].

pub mod ast;
pub mod erase;
pub mod eval;
pub mod gen;
pub mod meta;
pub mod parse;
pub mod pretty;
pub mod rewrite;
pub mod sqlgen;
pub mod suites;
pub mod typing;
