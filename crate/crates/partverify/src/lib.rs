//! File formats, parallel drivers, reports and the command-line front end
//! for the `partverify-core` evaluation toolkit.

pub mod cli;
pub mod images;
pub mod occlude;
pub mod parallel;
pub mod report;
pub mod schema;
