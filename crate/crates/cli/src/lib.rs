//! Batch evaluation harness and game server for hexstrat.
pub mod harness;
pub mod serve;
