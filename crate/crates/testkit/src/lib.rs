// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test fixtures and slow, direct reference implementations used as oracles
//! against the library's optimized code paths.

pub mod corpus;
pub mod fixtures;
pub mod oracle;
