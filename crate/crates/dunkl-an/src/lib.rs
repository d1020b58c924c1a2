//! Sweeps, verification reports and the command line front end for
//! [`dunkl_an_core`].

pub mod cli;
pub mod output;
pub mod verify;

pub use dunkl_an_core as core;
