//! Command-line front end for `hlgrowth`: simulation runs, spectra,
//! ensembles, schedule audits and SVG rendering.

pub mod args;
pub mod error;
pub mod manifest;
pub mod output;
pub mod report;
pub mod run;
pub mod svg;
