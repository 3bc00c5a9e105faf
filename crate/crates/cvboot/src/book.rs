// The guide's code listings double as doc-tests: each chapter is included
// here so `cargo test --doc` compiles and runs every fenced Rust block,
// keeping the book in sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/estimands.md")]
mod estimands {}

#[doc = include_str!("../../../book/src/resampling.md")]
mod resampling {}

#[doc = include_str!("../../../book/src/variance.md")]
mod variance {}

#[doc = include_str!("../../../book/src/calibration.md")]
mod calibration {}

#[doc = include_str!("../../../book/src/learners-and-metrics.md")]
mod learners_and_metrics {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
