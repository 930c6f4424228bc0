//! Guide chapters compiled as doc-tests.
//!
//! One module per chapter, so a failing snippet is reported under its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}
#[doc = include_str!("../../../book/src/kernel.md")]
pub mod kernel {}
#[doc = include_str!("../../../book/src/kaar.md")]
pub mod kaar_forecaster {}
#[doc = include_str!("../../../book/src/effdim.md")]
pub mod effdim {}
#[doc = include_str!("../../../book/src/certificate.md")]
pub mod certificate {}
#[doc = include_str!("../../../book/src/ewa.md")]
pub mod ewa {}
#[doc = include_str!("../../../book/src/adversaries.md")]
pub mod adversaries {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
