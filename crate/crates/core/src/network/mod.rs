//! Residual hypercomplex classifier, training loop and schedules.

pub mod config;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod schedule;

pub use config::NetworkConfig;
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use layers::{LayerInfo, LayerKind, Module, ParamClass};
pub use model::{calibrate, evaluate, octonion_input, train_step, Network, ParamCounts, Sgd};
pub use schedule::{lr_at, Schedule, ScheduleKind, Segment};
