// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exit codes: 1 for bad options, 2 for bad data, 3 for numerical failure.

use std::fmt;

use syncomp::ErrorClass;

/// An option combination that cannot be run.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A result that is not finite or fails its own check.
#[derive(Debug)]
pub struct Numerical(pub String);

impl fmt::Display for Numerical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<syncomp::Error>() {
            return match core.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            };
        }
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<Numerical>() {
            return 3;
        }
    }
    2
}
