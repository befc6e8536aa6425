//! The chapters of `book/` as modules, so that `cargo test --doc` runs every
//! code block in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}
#[doc = include_str!("../../../book/src/binary.md")]
pub mod binary {}
#[doc = include_str!("../../../book/src/continuous.md")]
pub mod continuous {}
#[doc = include_str!("../../../book/src/pilot.md")]
pub mod pilot {}
#[doc = include_str!("../../../book/src/study.md")]
pub mod study {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

/// Chapter files that must appear in `SUMMARY.md`.
pub const CHAPTERS: &[&str] = &[
    "introduction.md",
    "sampling.md",
    "binary.md",
    "continuous.md",
    "pilot.md",
    "study.md",
    "cli.md",
];
