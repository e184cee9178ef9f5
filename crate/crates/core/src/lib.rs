pub mod alphared;
pub mod error;
pub mod fourier;
pub mod gf2;
pub mod invariance;
pub mod mc;
pub mod report;
pub mod rm;
pub mod spectrum;
pub mod tester;
pub mod uggap;

pub use error::{Error, Result};
pub use fourier::CodeFunction;
pub use gf2::{AffineForm, BitWord, GF2Matrix};
pub use rm::{CodePair, CosetRep, HadamardCode, RmCode};
pub use spectrum::CayleyGraph;
pub use tester::{CanonicalTester, EvalMode, SoundnessPoint};
