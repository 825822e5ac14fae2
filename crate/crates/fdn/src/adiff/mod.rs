//! Numerical substrate: tensors, a reverse-mode tape, parameter storage,
//! Adam, seeded random streams, and a finite-difference gradient checker.

pub mod adam;
pub mod backend;
pub mod gradcheck;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use backend::{Backend, RawExec, TapeExec};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use params::ParamStore;
pub use rng::StreamRng;
pub use tape::{Tape, Value};
pub use tensor::{sigmoid, softplus, Tensor};
