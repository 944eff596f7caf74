pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod pipeline;
pub mod protocol;
pub mod wav;
