//! Dataset ingestion, checkpoints, reports and the drivers behind the
//! command-line tool.

pub mod checkpoint;
pub mod cifar;
pub mod report;
pub mod run;
pub mod verify;

pub use cifar::{load_cifar, Variant};
pub use report::{EpochRow, RunReport};
pub use run::{bundled, eval, load_splits, train, Splits};
pub use verify::{verify_algebra, verify_bn, verify_init, Check, SuiteReport};
