//! Fractional online allocation with concave diminishing-returns objectives.
//!
//! The crate provides:
//!
//! * an expression algebra for building monotone concave valuations with
//!   diminishing returns ([`valuation`]), including polymatroid valuations
//!   driven by rank oracles ([`polymatroid`]);
//! * a potential transform that turns any such valuation into the smoothed
//!   potential used for competitive online allocation ([`transform`]);
//! * an online primal–dual greedy engine producing allocations together
//!   with a verifiable dual certificate ([`engine`]);
//! * offline optimum estimators for benchmarking ([`offline`]);
//! * instance generators and (de)serialization ([`instance`]).
//!
//! Numeric kernels are generic over the floating-point width through
//! [`scalar::Real`]; the aliases at the crate root fix `f64`, which is what
//! the command-line harness uses.

pub mod engine;
pub mod instance;
pub mod offline;
pub mod polymatroid;
pub mod scalar;
pub mod transform;
pub mod valuation;

pub use engine::{
    dual_upper_bound, run_online, verify_certificate, verify_certificate_with, AllocationState,
    DualCertificate, EngineError, Policy, RunReport, VerifyReport, DISCRETIZATION_C,
};
pub use instance::{generate, Arrival, Family, GenParams, Instance, InstanceError, InstanceMeta};
pub use offline::{frank_wolfe, grid_brute_force, OfflineError, OptEstimate, FW_MAX_ITERS, FW_TOL};
pub use scalar::Real;
pub use transform::{
    fhat_at_fgrad, fhat_numeric, gamma_e, QuadratureScheme, RayValuation, TransformError,
    UTransform,
};
pub use valuation::check::{check_cdr, CdrReport, CdrValuation, PointSampler, PropertyViolation};
pub use valuation::{CoordId, ScalarConcave, SumTerm, ValuationError, ValuationExpr};

/// Default-precision valuation expression.
pub type Valuation = ValuationExpr<f64>;
/// Default-precision scalar concave building block.
pub type Scalar1d = ScalarConcave<f64>;
/// Default-precision rank oracle.
pub type Rank = polymatroid::RankOracle<f64>;
