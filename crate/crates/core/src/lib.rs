//! Spectral simulation and verification of multi-component KPZ / stochastic
//! Burgers systems on the one-dimensional torus.

pub mod drivers;
pub mod error;
pub mod mollifier;
pub mod noise;
pub mod renorm;
pub mod replicas;
pub mod sbe;
pub mod spectral;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use mollifier::{CustomSymbol, CutoffSymbol, Mollifier, MollifierSymbol, Symbol};
pub use renorm::{RenormValues, Region};
pub use tensor::{CouplingTensor, DiffusionPair, TensorReport};
pub use noise::{NoiseIncrement, RngStream};
pub use spectral::{PaddedGrid, SpectralField};
pub use sbe::{RenormPolicy, Scheme, SimConfig};
