//! Hypercomplex (complex, quaternion and octonion) convolutional networks.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below fix the double-precision instantiation used by the
//! command-line tool and the verification suites.

pub mod algebra;
pub mod batchnorm;
pub mod conv;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod init;
pub mod network;
pub mod quadrature;
pub mod scalar;
pub mod tensor;

pub use algebra::{AlgebraDim, CayleyTable, Octonion};
pub use error::{Error, Result};
pub use network::{Network, NetworkConfig};
pub use scalar::Scalar;
pub use tensor::{HypercomplexTensor, RealTensor};

pub type OctonionF64 = algebra::Octonion<f64>;
pub type RealTensorF64 = tensor::RealTensor<f64>;
pub type HypercomplexTensorF64 = tensor::HypercomplexTensor<f64>;
pub type BlockWeightF64 = conv::BlockWeight<f64>;
pub type NetworkF64 = network::Network<f64>;
pub type DatasetF64 = dataset::Dataset<f64>;
