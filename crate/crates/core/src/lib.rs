pub mod bpe;
pub mod corpus;
pub mod data;
pub mod gpt;
pub mod train;
pub mod instruct;
pub mod config;
pub mod cli;
