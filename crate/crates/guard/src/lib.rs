pub mod admin;
pub mod audit;
pub mod batch;
pub mod catalog;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod lexer;
pub mod policy;
pub mod protocol;
pub mod script;
pub mod server;
pub mod wrap;
