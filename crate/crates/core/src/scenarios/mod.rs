//! Builders for the concrete systems used as fixtures and benchmarks.

mod appd;
mod cpmg;
mod crosstalk;
mod drag;
mod iswap;
mod probe;
mod three_axis;

pub use appd::{ghz_state, qubit_in_register, rydberg_chain, rydberg_drift, QubitInRegisterConfig, RydbergConfig};
pub use cpmg::{cpmg_centers, cpmg_sequence, dephasing_operator, qubit_drive_operator, CpmgConfig};
pub use crosstalk::{
    c10, c21, controlled_phase_diagonal, default_couplings, register as register_crosstalk, CrosstalkConfig,
    CrosstalkProblem, COUPLINGS_MHZ, CROSSTALK_OBJECTIVE,
};
pub use drag::{drag_populations, drag_qutrit, final_populations, DragConfig, DragNoise, DragPulse, QutritSystem};
pub use iswap::{
    bessel_j1, fixed_qubit_operator, iswap_noise_operator, iswap_operator, iswap_system, iswap_target,
    parametric_rate, IswapConfig,
};
pub use probe::{
    cnot, probe_control, probe_gates, probe_grid, probe_noise_operator, probe_projector, Gate, ProbeConfig,
    PROBE_GATES, PROBE_GATE_TIME,
};
pub use three_axis::{three_axis_experiments, three_axis_model, three_axis_truth, ThreeAxisConfig};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::ControlSolution;
use crate::error::{Error, Result};
use crate::optimizer::{GraphSpec, ObjectiveRegistry};
use crate::sysid::ExperimentFile;

pub const SCENARIOS: [&str; 8] = ["cpmg", "drag", "iswap", "probe", "crosstalk", "appd_a", "appd_b", "three_axis"];

/// A scenario name and its parameters (rates in rad/s, times in s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ScenarioConfig {
    pub fn new(scenario: &str, params: serde_json::Value) -> Result<Self> {
        let params = match params {
            serde_json::Value::Object(m) => m,
            serde_json::Value::Null => serde_json::Map::new(),
            other => return Err(Error::InvalidInput(format!("scenario parameters must be an object, got {other}"))),
        };
        Ok(Self { scenario: scenario.to_string(), params })
    }

    fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(serde_json::Value::Object(self.params.clone()))
            .map_err(|e| Error::InvalidInput(format!("{} parameters: {e}", self.scenario)))
    }
}

/// Parameters holding angular frequencies, for unit conversion at the
/// command line.
pub fn frequency_params(scenario: &str) -> &'static [&'static str] {
    match scenario {
        "drag" => &["anharmonicity", "amplitude", "detuning"],
        "iswap" => &["coupling", "modulation_amplitude", "pump", "max_rate", "max_rabi"],
        "appd_a" => &["max_rate", "drift"],
        "appd_b" => &["max_rabi", "max_detuning", "interaction", "edge_detuning"],
        "crosstalk" => &["couplings"],
        _ => &[],
    }
}

/// What a scenario produces: a control, an optimization graph or a set of
/// identification experiments.
#[derive(Debug, Clone)]
pub enum Artifact {
    Control(ControlSolution),
    Graph(GraphSpec),
    Experiments(ExperimentFile),
}

impl Artifact {
    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::Control(_) => "control",
            Artifact::Graph(_) => "graph",
            Artifact::Experiments(_) => "experiments",
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        match self {
            Artifact::Control(c) => c.to_json_value(),
            Artifact::Graph(g) => serde_json::to_value(g).expect("graph serializes"),
            Artifact::Experiments(e) => serde_json::to_value(e).expect("experiments serialize"),
        }
    }
}

pub fn build(cfg: &ScenarioConfig) -> Result<Artifact> {
    Ok(match cfg.scenario.as_str() {
        "cpmg" => {
            let c: CpmgConfig = cfg.parse()?;
            Artifact::Control(cpmg_sequence(c.order, c.duration, c.width())?)
        }
        "drag" => Artifact::Control(drag_qutrit(&cfg.parse()?)?.control),
        "iswap" => Artifact::Control(iswap_system(&cfg.parse()?)?.0),
        "probe" => Artifact::Control(probe_control(&cfg.parse()?)?),
        "crosstalk" => Artifact::Graph(CrosstalkProblem::new(&cfg.parse()?)?.graph_spec()?),
        "appd_a" => Artifact::Graph(qubit_in_register(&cfg.parse()?)?),
        "appd_b" => Artifact::Graph(rydberg_chain(&cfg.parse()?)?),
        "three_axis" => {
            let exps = three_axis_experiments(&cfg.parse()?)?;
            Artifact::Experiments(ExperimentFile::from_parts(&three_axis_model(), &exps))
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown scenario '{other}', expected one of {}", SCENARIOS.join(", "))))
        }
    })
}

/// Registry with every custom objective the scenarios reference.
pub fn registry() -> ObjectiveRegistry {
    let mut reg = ObjectiveRegistry::new();
    register_crosstalk(&mut reg);
    reg
}
