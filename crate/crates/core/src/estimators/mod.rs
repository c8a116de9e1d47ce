//! Classical recovery: MMSE shrinkage, (G)MMV-AMP and SOMP.

pub mod amp;
pub mod shrinkage;
pub mod somp;

pub use amp::{gmmv_amp, gmmv_amp_trace, smv_amp, smv_amp_trace, AmpState, GmmvAmpConfig};
pub use shrinkage::{shrinkage_derivative, shrinkage_mmse, BernoulliGaussianPrior, ShrinkageKernel};
pub use somp::{somp, somp_detailed, SompResult};
