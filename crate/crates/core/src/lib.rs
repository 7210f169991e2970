pub mod atoms;
pub mod bench;
pub mod check;
pub mod cli;
pub mod engine;
pub mod formula;
pub mod mapsem;
pub mod oracle;
pub mod rulegen;
pub mod traceio;
