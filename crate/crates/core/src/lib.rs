//! Redistricting with choice: school-zone optimization that anticipates
//! where students will actually enroll.

pub mod choice;
pub mod district;
pub mod optimize;
pub mod pipeline;
pub mod report;
pub mod error;
pub mod scenario;
pub mod synth;

pub use error::{Error, Result};
