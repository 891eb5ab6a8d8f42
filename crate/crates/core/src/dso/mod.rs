//! Distribution-grid side: power flow, congestion detection, relief and validation.

mod powerflow;
mod relief;
mod validation;

pub use powerflow::{
    apply_flexibility, bus_injections, dc_power_flow, detect_congestion, line_susceptance, BusSeries, CongestionReport,
    PowerFlowModel, PowerFlowResult, TrafficLight, BALANCE_TOL,
};
pub use relief::{solve_relief_opf, ReliefOffer, ReliefSolution};
pub use validation::{
    validate_dso_managed, validate_hybrid, validate_volumes, FlexVolume, ReliefActivation, ValidationOutcome,
};
