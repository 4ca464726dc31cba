//! File ingestion, run configuration and result emission.

pub mod config;
mod csv_in;
pub mod emit;

pub use config::RunConfig;
pub use csv_in::{load_csv, write_dataset_csv, CsvSchema};
pub use emit::{read_structured, write_structured, write_table, Table, SCHEMA_VERSION};
