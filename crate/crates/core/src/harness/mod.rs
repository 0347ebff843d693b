//! Trial protocol, controller wiring, scenario runner and result export.

mod ablation;
mod controller;
mod export;
mod scenario;
mod trial;

pub use ablation::{median, run_ablation, summarize_ablation, AblationRow};
pub use controller::{ControlOutput, Controller};
pub use export::{
    export_results, plot_series, read_log, replay, write_log, PlotRow, ReplayOutcome, RunLog,
    LOG_FORMAT,
};
pub use scenario::{
    evaluate_frozen, run_scenario, run_scenario_with_log, OptimizerConfig, PayloadEvent, ReportRow,
    RunReport, ScenarioConfig, Summary, TerrainEvent, VelocityEvent, INFERENCE_BETA,
};
pub use trial::{interpolate_params, summarize_trial, TickSample, TrialSession};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Controller configurations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerVariant {
    OpenLoop,
    Vmc,
    Tegotae,
    VmcTegotae,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 4] =
        [Self::OpenLoop, Self::Vmc, Self::Tegotae, Self::VmcTegotae];

    pub fn uses_vmc(self) -> bool {
        matches!(self, Self::Vmc | Self::VmcTegotae)
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, Self::Tegotae | Self::VmcTegotae)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OpenLoop => "open-loop",
            Self::Vmc => "vmc",
            Self::Tegotae => "tegotae",
            Self::VmcTegotae => "vmc-tegotae",
        }
    }
}

impl std::fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControllerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown controller variant `{s}`")))
    }
}

/// Timing of one trial: parameter transition followed by the measured window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialProtocol {
    /// Parameter interpolation phase (s).
    pub transition_duration: f64,
    /// Measured phase (s).
    pub steady_duration: f64,
    /// Control rate (Hz).
    pub control_rate: f64,
}

impl Default for TrialProtocol {
    fn default() -> Self {
        Self {
            transition_duration: 1.5,
            steady_duration: 3.0,
            control_rate: 1000.0,
        }
    }
}

impl TrialProtocol {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn transition_steps(&self) -> usize {
        (self.transition_duration * self.control_rate).round() as usize
    }

    pub fn steady_steps(&self) -> usize {
        (self.steady_duration * self.control_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.transition_duration >= 0.0
            && self.steady_duration > 0.0
            && self.control_rate > 0.0
            && self.steady_steps() > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(
                "protocol durations and rate must be positive".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_defaults() {
        let p = TrialProtocol::default();
        assert_eq!(p.steady_steps(), 3000);
        assert_eq!(p.transition_steps(), 1500);
        assert_eq!(p.dt(), 0.001);
    }

    #[test]
    fn variant_gating() {
        assert!(
            !ControllerVariant::OpenLoop.uses_vmc() && !ControllerVariant::OpenLoop.uses_feedback()
        );
        assert!(
            ControllerVariant::VmcTegotae.uses_vmc()
                && ControllerVariant::VmcTegotae.uses_feedback()
        );
        for v in ControllerVariant::ALL {
            assert_eq!(v.name().parse::<ControllerVariant>().unwrap(), v);
        }
        assert!("walk".parse::<ControllerVariant>().is_err());
    }
}
