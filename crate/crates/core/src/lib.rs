pub mod config;
pub mod dual;
pub mod error;
pub mod experiments;
mod fenwick;
pub mod harness;
pub mod kernels;
pub mod rng;
pub mod stats;
pub mod suite;
pub mod voter;
pub mod walks;

pub use error::{Error, Result};
pub use kernels::{build_kernel, Kernel, KernelFamily, KernelSpec, SubKernel};
pub use rng::{SimRng, Stream};
pub use stats::EstimateReport;
