//! End-to-end experiments turning the construction into measurable checks:
//! round trips through primed systems, an independent time-stepping
//! inversion oracle, conservation monitors and solver diagnostics.

mod conservation;
mod fit;
mod forward;
mod oracle;
mod report;
mod roundtrip;
mod setup;
mod sturm_checks;

pub use conservation::{
    conservation_checks, monitor_trajectory, ConservationMaxima, ConservationMonitor,
    ConservationReport, StepResiduals,
};
pub use fit::{constant_floor, fit_slope, linear_floor, MAX_WINDOW_ERROR};
pub use forward::{forward_experiment, self_inversion_experiment};
pub use oracle::{oracle_compare_experiment, timestep_inversion_oracle, OracleTrack};
pub use report::{
    Comparison, ExperimentReport, FloorModel, SeriesRow, SlopeFit, TimeSeries, Verdict,
    CSV_COLUMNS,
};
pub use roundtrip::{
    build_target, dual_route_density_orders, interaction_independence_experiment, mismatch,
    order_sweep, primed_initial_state, primed_run, relative_deviation, roundtrip_experiment,
    PrimedRun, Target,
};
pub use setup::{
    profile, ConservationOptions, ExperimentSetup, OracleOptions, Profile, GROUND_STATE_TOL,
};
pub use sturm_checks::{sturm_liouville_diagnostics, SlCheckSetup};
