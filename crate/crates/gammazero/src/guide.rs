//! Compiles the book's code snippets as doc-tests so the guide in `book/`
//! can never drift from the library. `cargo test --doc` runs every example.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/beliefs.md")]
mod beliefs {}

#[doc = include_str!("../../../book/src/graphs.md")]
mod graphs {}

#[doc = include_str!("../../../book/src/network.md")]
mod network {}

#[doc = include_str!("../../../book/src/experts.md")]
mod experts {}

#[doc = include_str!("../../../book/src/search.md")]
mod search {}
