//! Laws of the driving pairs `(M, Q)`: specification, sampling, assumption
//! audits, stopped pairs and configuration files.

pub mod audit;
pub mod config;
pub mod presets;
pub mod sample;
pub mod spec;
pub mod stopped;

pub use audit::{audit_assumptions, AssumptionCheck, AssumptionReport, Verdict};
pub use sample::{haar_rotation, sample_pair, sample_pair_counted, PairLaw, PairSample};
pub use spec::{Family, ModelSpec, QLaw, RotationLaw, ScaleLaw, SpecIssue};
pub use stopped::{sample_stopped_pair, StoppedLaw, StoppedPairSample, Stopping};
