//! Engine for explainable binary risk prediction on tabular records.
//!
//! The crate is organised around the analysis loop a clinician drives from
//! the dashboard:
//!
//! * [`model`] trains and serves a gradient-boosted tree classifier.
//! * [`explain`] produces local attributions and picks the most faithful one.
//! * [`ranges`] derives percentile ranges from same-class predictions and
//!   compares them with curated clinical intervals.
//! * [`recommend`] searches actionable counterfactuals and turns them into
//!   stepwise plans.
//! * [`evidence`] serves the pre-verified citation store.
//! * [`router`] sends chat queries to the command grammar or to an external
//!   assistant with a bounded context pack.

pub mod data;
pub mod evidence;
pub mod explain;
pub mod model;
pub mod ranges;
pub mod recommend;
pub mod router;
pub mod schema;
pub mod stats;
pub mod synthetic;

pub use data::{Dataset, PatientRecord};
pub use model::{ProbabilityModel, RiskModel};
pub use schema::{FeatureSchema, FeatureDef, HealthyDirection};
