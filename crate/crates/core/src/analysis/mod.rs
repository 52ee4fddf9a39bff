//! Lyapunov functionals, Monte Carlo estimators, the Halanay comparison
//! checker and stability classification.

pub mod checks;
pub mod classify;
pub mod ensemble;
pub mod halanay;
pub mod lyapunov;

pub use checks::{dynkin_residual, supermartingale_check, DynkinReport, DynkinSetup, SupermartingaleReport};
pub use classify::{classify_stability, Classification, ClassifySettings};
pub use ensemble::{mc_ensemble, McSetup, McStats};
pub use halanay::{halanay_bound_check, halanay_integrate, Coefficient, HalanayProblem, HalanayReport, HalanaySeries};
pub use lyapunov::{eval_v1, generator_v1_with_chi, v1_series, LyapunovV1Spec, LyapunovV2Spec};
