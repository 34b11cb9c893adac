//! Observational samples, fold roles and the CSV formats used on disk.

mod csv_io;
mod folds;
mod results;
mod table;

pub use csv_io::{fmt_real, read_csv, read_csv_from, write_csv, write_csv_to};
pub use folds::{assign_folds, FoldAssignment, Role, QUARTERS, THIRDS};
pub use results::{
    read_results_csv, read_results_from, write_results_csv, write_results_to, ResultRecord, RESULTS_HEADER,
};
pub use table::ObservationTable;
