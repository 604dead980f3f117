//! Runtime for synthesizing and executing multi-service workflows from a blank
//! slate.
//!
//! A run moves through four phases:
//!
//! 1. [`registry`]: discover tools by querying a catalog instead of loading
//!    every schema up front.
//! 2. [`probe`]: sample real responses with tight pagination, infer their
//!    structure and lock it before any bulk processing.
//! 3. [`anchor`]: keep the plan as an ordered todo list outside the
//!    transcript; its status discipline gates which step may execute.
//! 4. [`executor`]: fan work out under a concurrency ceiling with retries,
//!    a durable checkpoint file and idempotent side effects.
//!
//! [`mockenv`] simulates a mailbox and a drive so the whole flow runs
//! deterministically, and [`pipeline`] wires the phases together behind a
//! pluggable planner.

pub mod anchor;
pub mod cli;
pub mod env;
pub mod executor;
pub mod mockenv;
pub mod pipeline;
pub mod probe;
pub mod registry;

pub use env::{Environment, ErrorClass, ToolError};
