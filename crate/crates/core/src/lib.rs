//! Affine covariant integral quantization on the punctured plane.

pub mod coherent;
pub mod error;
pub mod field;
pub mod gauge;
pub mod moments;
pub mod quadrature;
pub mod quantizer;
pub mod sim2;
pub mod spectral;
pub mod weights;

pub use coherent::{gauge_from_state, omega_from_state, weight_from_state, RadialProfile, StateGauge, StateSpec};
pub use error::{Error, Result};
pub use field::{Interpolation, LogPolarGrid, PlaneFunction, SampledField, SharedFunction};
pub use gauge::{GaugeData, Units};
pub use moments::{MomentKey, MomentRequest, MomentTable};
pub use num_complex::Complex64;
pub use quadrature::{Decay, Estimate, LargeDecay};
pub use quantizer::{Observable, OperatorDescriptor};
pub use sim2::{ComplexPlaneVector, GroupElement, PlaneVector};
pub use spectral::{RadialProblem, SpectrumResult};
pub use weights::{AlphaSpec, WeightSpec};
