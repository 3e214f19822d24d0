//! Differentiable thin-shell MPM cloth simulation with an anisotropic
//! elasto-plastic material, Chamfer objectives, parameter identification and
//! trajectory optimization.

pub mod ad;
pub mod analysis;
pub mod constitutive;
pub mod error;
pub mod identify;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod mesh;
pub mod scalar;
pub mod sim;
pub mod trajectory;
pub mod trajopt;

pub use error::{Error, Result};

pub type Params = constitutive::ConstitutiveParams<f64>;
pub type Params32 = constitutive::ConstitutiveParams<f32>;
pub type State = sim::ClothState<f64>;
pub type State32 = sim::ClothState<f32>;
