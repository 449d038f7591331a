use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;
use serde_json::{json, Value};

use qctrlkit::control::{ControlSolution, Projector};
use qctrlkit::filter::{filter_function as compute_filter, FilterOptions};
use qctrlkit::json::MatrixJson;
use qctrlkit::linalg::basis_state;
use qctrlkit::noise::OneSidedPsd;
use qctrlkit::optimizer::{minimize, CostGraph, GraphSpec, MinimizeOptions, StopCriteria};
use qctrlkit::reconstruction::{
    build_sensitivity, reconstruct_co, reconstruct_svd, CoOptions, FrequencyPartition, SensitivityMatrix,
    DEFAULT_SVD_CUTOFF,
};
use qctrlkit::scenarios::{self, ScenarioConfig};
use qctrlkit::simulator::{simulate as run_simulation, NoiseChannel, NoiseOperator, NoiseSource, SamplingOptions};
use qctrlkit::sysid::{self, DataPoint, ExperimentFile, IdentifyOptions};

use crate::error::CliError;
use crate::io::{manifest_path, write_csv, write_json, Inputs, RunManifest};
use crate::{FilterArgs, IdentifyArgs, MethodArg, OptimizeArgs, ReconstructArgs, ScenarioBuildArgs, SimulateArgs};

const TWO_PI: f64 = 2.0 * PI;

fn hz_factor(hz: bool) -> f64 {
    if hz {
        TWO_PI
    } else {
        1.0
    }
}

fn load_control(inputs: &mut Inputs, path: &Path) -> Result<ControlSolution, CliError> {
    let value = inputs.json_value(path)?;
    ControlSolution::from_json_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_projector(inputs: &mut Inputs, path: Option<&Path>, dim: usize) -> Result<Projector, CliError> {
    let p = match path {
        Some(path) => inputs.json::<Projector>(path)?,
        None => Projector::full(dim),
    };
    if p.dimension() != dim {
        return Err(CliError::config(format!("projector has dimension {}, system has {dim}", p.dimension())));
    }
    Ok(p)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelsFile {
    channels: Vec<ChannelJson>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum CouplingName {
    Additive,
    DriveModulus,
    ShiftValue,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PsdJson {
    samples: Vec<f64>,
    resolution: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    coupling: CouplingName,
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    operator: Option<MatrixJson>,
    /// One-sided PSD, a fresh realization per trial.
    #[serde(default)]
    psd: Option<PsdJson>,
    /// Quasi-static values, trial `m` taking entry `m mod len`.
    #[serde(default)]
    values: Option<Vec<f64>>,
}

fn parse_channels(file: ChannelsFile, duration: f64, hz: bool) -> Result<Vec<NoiseChannel>, CliError> {
    file.channels
        .into_iter()
        .enumerate()
        .map(|(k, ch)| {
            let source = match (ch.psd, ch.values) {
                (Some(p), None) => NoiseSource::Psd(OneSidedPsd::new(p.samples, p.resolution * hz_factor(hz))?),
                (None, Some(v)) => NoiseChannel::static_values(&v, duration)?,
                _ => return Err(CliError::config(format!("channel {k}: give exactly one of 'psd' and 'values'"))),
            };
            let index = || ch.index.ok_or_else(|| CliError::config(format!("channel {k}: 'index' is required")));
            Ok(match ch.coupling {
                CouplingName::Additive => {
                    let op = ch
                        .operator
                        .ok_or_else(|| CliError::config(format!("channel {k}: additive coupling needs 'operator'")))?;
                    NoiseChannel::additive(op.to_matrix()?, source)
                }
                CouplingName::DriveModulus => NoiseChannel::drive_modulus(index()?, source),
                CouplingName::ShiftValue => NoiseChannel::shift_value(index()?, source),
            })
        })
        .collect()
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let ctrl = load_control(&mut inputs, &a.control)?;
    let channels_file: ChannelsFile = inputs.json(&a.channels)?;
    let times = inputs.csv_column(&a.times)?;
    let channels = parse_channels(channels_file, ctrl.duration(), a.hz)?;
    if a.initial_state >= ctrl.dimension() {
        return Err(CliError::config(format!(
            "initial state {} outside dimension {}",
            a.initial_state,
            ctrl.dimension()
        )));
    }
    let opts = match a.sampling_step {
        Some(step) => SamplingOptions::upsampled(step),
        None => SamplingOptions::default(),
    };
    let psi0 = basis_state(ctrl.dimension(), a.initial_state);
    let res = run_simulation(&ctrl, &channels, &psi0, &times, a.trials, a.seed, &opts)?;

    let prefix = a.out.display().to_string();
    let pops = PathBuf::from(format!("{prefix}_populations.csv"));
    let density = PathBuf::from(format!("{prefix}_density.json"));
    let mut header = vec!["t_seconds".to_string()];
    header.extend((0..ctrl.dimension()).map(|k| format!("p{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = res
        .times
        .iter()
        .zip(&res.populations)
        .map(|(&t, p)| std::iter::once(t).chain(p.iter().copied()).collect())
        .collect();
    write_csv(&pops, &header, &rows)?;
    write_json(
        &density,
        &json!({
            "t_seconds": res.times.last(),
            "trials": res.final_density.trials,
            "purity": res.final_density.purity(),
            "rho": MatrixJson::from_matrix(&res.final_density.rho),
        }),
    )?;
    let config = json!({
        "trials": a.trials,
        "sampling_step_s": a.sampling_step,
        "initial_state": a.initial_state,
        "hz": a.hz,
    });
    let outputs = [pops, density];
    let manifest = RunManifest::new("simulate", config, Some(a.seed), &inputs, &outputs, start);
    write_json(Path::new(&format!("{prefix}_manifest.json")), &manifest)
}

pub fn filter_function(a: &FilterArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let ctrl = load_control(&mut inputs, &a.control)?;
    let op: MatrixJson = inputs.json(&a.noise_operator)?;
    let op = op.to_matrix()?;
    let p = load_projector(&mut inputs, a.projector.as_deref(), ctrl.dimension())?;
    let freqs: Vec<f64> = inputs.csv_column(&a.freqs)?.into_iter().map(|f| f * hz_factor(a.hz)).collect();
    let opts = FilterOptions { samples: a.samples, ..FilterOptions::default() };
    let ff = compute_filter(&ctrl, &NoiseOperator::Constant(op), &p, &freqs, &opts)?;
    let rows: Vec<Vec<f64>> = ff.frequencies.iter().zip(&ff.values).map(|(&w, &f)| vec![w, f]).collect();
    write_csv(&a.out, &["omega_rad_per_s", "filter_function_s2"], &rows)?;
    let config = json!({ "samples": a.samples, "hz": a.hz });
    let manifest = RunManifest::new("filter-function", config, None, &inputs, &[a.out.clone()], start);
    write_json(&manifest_path(&a.out), &manifest)
}

pub fn optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let mut doc = inputs.json_value(&a.problem)?;
    let obj = doc.as_object_mut().ok_or_else(|| CliError::config("problem must be a JSON object"))?;
    let stop: StopCriteria = match obj.remove("stop") {
        Some(v) => serde_json::from_value(v).map_err(|e| CliError::config(format!("stop: {e}")))?,
        None => StopCriteria::default(),
    };
    let initial: Option<Vec<f64>> = match obj.remove("initial") {
        Some(v) => Some(serde_json::from_value(v).map_err(|e| CliError::config(format!("initial: {e}")))?),
        None => None,
    };
    let spec: GraphSpec = serde_json::from_value(doc).map_err(|e| CliError::config(format!("problem: {e}")))?;
    let graph = CostGraph::build(spec, &scenarios::registry())?;
    let opts = MinimizeOptions { starts: a.starts, seed: a.seed, stop, initial };
    let res = minimize(&graph, graph.lower(), graph.upper(), &opts)?;
    let components = graph.components(&res.variables)?;
    write_json(&a.out, &json!({ "result": res, "components": components }))?;
    let config = serde_json::to_value(&opts).expect("options serialize");
    let manifest = RunManifest::new("optimize", config, Some(a.seed), &inputs, &[a.out.clone()], start);
    write_json(&manifest_path(&a.out), &manifest)
}

fn load_partition(inputs: &mut Inputs, path: &Path, hz: bool) -> Result<FrequencyPartition, CliError> {
    let mut part: FrequencyPartition = inputs.json(path)?;
    for ch in &mut part.channels {
        ch.omega_min *= hz_factor(hz);
        ch.omega_max *= hz_factor(hz);
    }
    // re-validate after scaling
    Ok(FrequencyPartition::new(part.channels)?)
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let partition = load_partition(&mut inputs, &a.partition, a.hz)?;
    let infidelities = inputs.csv_column(&a.infidelities)?;
    let f = match &a.sensitivity {
        Some(path) => {
            let (_, cols) = inputs.csv_columns(path)?;
            let rows = cols.first().map_or(0, Vec::len);
            let values: Vec<Vec<f64>> = (0..rows).map(|j| cols.iter().map(|c| c[j]).collect()).collect();
            let labels = (0..rows).map(|j| format!("row{j}")).collect();
            SensitivityMatrix::from_filter_values(&values, partition.clone(), labels)?
        }
        None => {
            if a.controls.is_empty() {
                return Err(CliError::config("give --sensitivity or --controls with --noise-operators"));
            }
            let controls = a
                .controls
                .iter()
                .map(|p| load_control(&mut inputs, p))
                .collect::<Result<Vec<_>, _>>()?;
            let ops = a
                .noise_operators
                .iter()
                .map(|p| Ok(NoiseOperator::Constant(inputs.json::<MatrixJson>(p)?.to_matrix()?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let p = load_projector(&mut inputs, a.projector.as_deref(), controls[0].dimension())?;
            build_sensitivity(&controls, &ops, &partition, &p, &FilterOptions::default())?
        }
    };
    let psd = match a.method {
        MethodArg::Svd => reconstruct_svd(&f, &infidelities, a.cutoff.unwrap_or(DEFAULT_SVD_CUTOFF))?,
        MethodArg::Co => reconstruct_co(&f, &infidelities, &CoOptions { lambda: a.lambda, ..CoOptions::default() })?,
    };
    if let Some(w) = &psd.warning {
        eprintln!("warning: {w}");
    }
    let multi = partition.channels.len() > 1;
    let mut rows = vec![];
    for (k, grid) in partition.channels.iter().enumerate() {
        for (w, s) in grid.frequencies().into_iter().zip(psd.channel(k)) {
            rows.push(if multi { vec![k as f64, w, *s] } else { vec![w, *s] });
        }
    }
    let header: &[&str] = if multi { &["channel", "omega_rad_per_s", "psd_value"] } else { &["omega_rad_per_s", "psd_value"] };
    write_csv(&a.out, header, &rows)?;
    let method = match a.method {
        MethodArg::Svd => "svd",
        MethodArg::Co => "co",
    };
    let config = json!({
        "method": method,
        "lambda": psd.lambda,
        "cutoff": a.cutoff,
        "partition": partition,
        "warning": psd.warning,
        "hz": a.hz,
    });
    let manifest = RunManifest::new("reconstruct", config, None, &inputs, &[a.out.clone()], start);
    write_json(&manifest_path(&a.out), &manifest)
}

pub fn identify(a: &IdentifyArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let file: ExperimentFile = inputs.json(&a.experiments)?;
    let (model, experiments) = file.to_parts()?;
    let (header, cols) = inputs.csv_columns(&a.data)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{}: missing column '{name}'", a.data.display())))
    };
    let (v, s) = (col("value")?, col("std_dev")?);
    let data: Vec<DataPoint> = cols[v].iter().zip(&cols[s]).map(|(&value, &std_dev)| DataPoint { value, std_dev }).collect();
    let opts = IdentifyOptions { starts: a.starts, seed: a.seed, lower: file.lower, upper: file.upper, ..IdentifyOptions::default() };
    let res = sysid::identify(&model, &experiments, &data, &opts)?;
    write_json(&a.out, &res)?;
    let config = serde_json::to_value(&opts).expect("options serialize");
    let manifest = RunManifest::new("identify", config, Some(a.seed), &inputs, &[a.out.clone()], start);
    write_json(&manifest_path(&a.out), &manifest)
}

/// Multiplies every number under the named keys by `factor`, descending into
/// arrays.
fn scale_params(params: &mut serde_json::Map<String, Value>, keys: &[&str], factor: f64) {
    fn scale(v: &mut Value, factor: f64) {
        match v {
            Value::Number(n) => {
                if let Some(x) = n.as_f64() {
                    *v = json!(x * factor);
                }
            }
            Value::Array(items) => items.iter_mut().for_each(|x| scale(x, factor)),
            _ => {}
        }
    }
    for key in keys {
        if let Some(v) = params.get_mut(*key) {
            scale(v, factor);
        }
    }
}

pub fn scenario_build(a: &ScenarioBuildArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let params = match &a.params {
        None => Value::Null,
        Some(s) if s.trim_start().starts_with('{') => {
            serde_json::from_str(s).map_err(|e| CliError::config(format!("--params: {e}")))?
        }
        Some(path) => inputs.json_value(Path::new(path))?,
    };
    let mut cfg = ScenarioConfig::new(&a.name, params)?;
    if a.hz {
        scale_params(&mut cfg.params, scenarios::frequency_params(&a.name), TWO_PI);
    }
    let artifact = scenarios::build(&cfg)?;
    write_json(&a.out, &artifact.to_json_value())?;
    let config = json!({ "scenario": cfg.scenario, "params": cfg.params, "artifact": artifact.kind() });
    let manifest = RunManifest::new("scenario build", config, None, &inputs, &[a.out.clone()], start);
    write_json(&manifest_path(&a.out), &manifest)
}

pub fn scenario_list() -> Result<(), CliError> {
    for name in scenarios::SCENARIOS {
        let freqs = scenarios::frequency_params(name);
        if freqs.is_empty() {
            println!("{name}");
        } else {
            println!("{name}\tfrequency parameters: {}", freqs.join(", "));
        }
    }
    Ok(())
}
