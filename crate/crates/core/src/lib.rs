//! Spectral-gap toolkit for ClassA matrix-product tuples: model validation,
//! transfer-map analysis, ground spaces, parent Hamiltonians and edge states.

pub mod error;
pub mod linalg;
pub mod model;
pub mod transfer;
pub mod ground;
pub mod hamiltonian;
pub mod states;

pub use error::{GapError, Result};
pub use linalg::{CMatrix, CVector, Subspace, C64};
pub use model::{build_aklt, build_kappa_example, build_product, ClassATuple, Tetrad};
pub use transfer::{KrausTuple, SpectralTripleII, DecayConstants};
pub use states::{BoundaryState, DecayFit, EdgeModel, Side, WindowObservable};
