//! A workbench for simulating HTTP dependencies during microservice
//! integration tests.
//!
//! The crate provides four interchangeable mock-server engines behind one
//! HTTP host:
//!
//! * [`replay`] — record/replay against captured traffic, with tiered
//!   request matching.
//! * [`miner`] — static rules and entity lifecycles mined from captured
//!   traffic.
//! * [`ir`] — a typed, guarded transition-system contract that is executed
//!   directly (and can be generated by a model).
//! * [`sim`] — an online, model-backed simulator that answers each request
//!   from a bounded conversation.
//!
//! Around the engines sit the supporting pieces: [`trace`] capture and
//! storage, a [`proxy`] for recording live traffic, a reference [`demo`]
//! microservice stack to evaluate against, and a scenario [`harness`] that
//! measures how faithfully a mock reproduces the live service.

pub mod cli;
pub mod config;
pub mod demo;
pub mod harness;
pub mod host;
pub mod ir;
pub mod json;
pub mod miner;
pub mod proxy;
pub mod replay;
pub mod response;
pub mod sim;
pub mod trace;
