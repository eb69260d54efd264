pub mod cli;
pub mod enrichment;
pub mod experiments;
pub mod neuralcore;
pub mod synthcohort;
pub mod tensorio;
