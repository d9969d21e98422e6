pub mod catalog;
pub mod cli;
pub mod designkit;
pub mod extract;
pub mod fitkernel;
pub mod grid;
pub mod mbvd;
pub mod netparams;
pub mod pipeline;
pub mod plot;
pub mod transduce;
