//! Resource-leak detection, ownership inference and automated repair for MiniJ,
//! a small Java-like language.
//!
//! The stages mirror the order in which [`pipeline::run_pipeline`] drives them:
//! [`frontend`] parses and prints source, [`cfg`] lowers method bodies,
//! [`checker`] reports leaks, [`inference`] recovers ownership specifications,
//! [`transforms`] reshapes fields and wrappers, [`escape`] decides which leaks
//! are safe to repair, [`repair`] writes the patches and [`oracle`] runs
//! programs to validate them.

pub mod cfg;
pub mod checker;
pub mod escape;
pub mod frontend;
pub mod fuzz;
pub mod inference;
pub mod oracle;
pub mod pipeline;
pub mod repair;
pub mod transforms;
