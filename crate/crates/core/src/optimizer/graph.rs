//! Declarative cost graphs.
//!
//! A graph is a list of named nodes in evaluation order; every node refers
//! only to nodes declared before it, so the list is acyclic by construction.
//! The cost is a weighted sum of scalar metric nodes. Gradients are obtained
//! by a reverse sweep over the same list.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::transforms::{crab_matrix, lti_matrix, symmetrize, symmetrize_adjoint, Basis, Kernel};
use super::Objective;
use crate::control::{drive_quadratures, subspace_overlap, Projector, PwcOperator, Segmentation};
use crate::error::{Error, Result};
use crate::filter::{weighted_filter_with_gradient, FilterOptions};
use crate::json::{MatrixJson, VectorJson};
use crate::linalg::{c, is_hermitian, re_inner, CMat, CVec};
use crate::noise::OneSidedPsd;

/// A bound given either once for every variable of a block or per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl BoundSpec {
    fn expand(&self, count: usize) -> Result<Vec<f64>> {
        match self {
            BoundSpec::Scalar(v) => Ok(vec![*v; count]),
            BoundSpec::Vector(v) if v.len() == count => Ok(v.clone()),
            BoundSpec::Vector(v) => Err(Error::Graph(format!("{} bounds given for {count} variables", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSpec {
    pub samples: Vec<f64>,
    pub resolution: f64,
}

fn one() -> f64 {
    1.0
}

fn default_band_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeSpec {
    /// Optimizable block. The node outputs `scale · v`; bounds apply to `v`.
    Variables {
        name: String,
        count: usize,
        #[serde(default)]
        lower: Option<BoundSpec>,
        #[serde(default)]
        upper: Option<BoundSpec>,
        #[serde(default = "one")]
        scale: f64,
    },
    Fixed {
        name: String,
        values: Vec<f64>,
    },
    Symmetrize {
        name: String,
        input: String,
    },
    Mask {
        name: String,
        input: String,
        mask: Vec<f64>,
    },
    Pwc {
        name: String,
        input: String,
        duration: f64,
    },
    LtiFilter {
        name: String,
        input: String,
        kernel: Kernel,
        segments: usize,
    },
    Crab {
        name: String,
        input: String,
        basis: Basis,
        duration: f64,
        segments: usize,
    },
    /// `Ω (cos φ (C + C†) + sin φ · i(C − C†))`; without a phase, `Ω (C + C†)`.
    Drive {
        name: String,
        operator: MatrixJson,
        modulus: String,
        #[serde(default)]
        phase: Option<String>,
    },
    /// `I (C + C†) + Q · i(C − C†)`.
    DriveIq {
        name: String,
        operator: MatrixJson,
        i: String,
        q: String,
    },
    Shift {
        name: String,
        operator: MatrixJson,
        signal: String,
    },
    Hamiltonian {
        name: String,
        terms: Vec<String>,
        #[serde(default)]
        drift: Option<MatrixJson>,
    },
    OptimalCost {
        name: String,
        hamiltonian: String,
        target: MatrixJson,
        #[serde(default)]
        projector: Option<Projector>,
    },
    /// `1 − |⟨ψ_target|U|ψ_initial⟩|²`.
    StateCost {
        name: String,
        hamiltonian: String,
        initial: VectorJson,
        target: VectorJson,
    },
    /// `Σ_k F_k(0)/2π`.
    QuasiStatic {
        name: String,
        hamiltonian: String,
        noise_operators: Vec<MatrixJson>,
        #[serde(default)]
        projector: Option<Projector>,
        #[serde(default)]
        samples: Option<usize>,
    },
    /// `F(ω)/2π`.
    FixedFrequency {
        name: String,
        hamiltonian: String,
        noise_operator: MatrixJson,
        frequency: f64,
        #[serde(default)]
        projector: Option<Projector>,
        #[serde(default)]
        samples: Option<usize>,
    },
    /// `(1/2π) ∫_{ω₁}^{ω₂} S(ω) F(ω) dω` with a one-sided PSD.
    Band {
        name: String,
        hamiltonian: String,
        noise_operator: MatrixJson,
        psd: PsdSpec,
        band: [f64; 2],
        #[serde(default = "default_band_points")]
        points: usize,
        #[serde(default)]
        projector: Option<Projector>,
        #[serde(default)]
        samples: Option<usize>,
    },
    /// `(max(0, Σ v − max) / unit)²` over the input values.
    DurationPenalty {
        name: String,
        input: String,
        max: f64,
        #[serde(default = "one")]
        unit: f64,
    },
    /// A registered objective on the concatenated input vectors.
    Custom {
        name: String,
        objective: String,
        inputs: Vec<String>,
        #[serde(default)]
        params: serde_json::Value,
    },
}

impl NodeSpec {
    pub fn name(&self) -> &str {
        match self {
            NodeSpec::Variables { name, .. }
            | NodeSpec::Fixed { name, .. }
            | NodeSpec::Symmetrize { name, .. }
            | NodeSpec::Mask { name, .. }
            | NodeSpec::Pwc { name, .. }
            | NodeSpec::LtiFilter { name, .. }
            | NodeSpec::Crab { name, .. }
            | NodeSpec::Drive { name, .. }
            | NodeSpec::DriveIq { name, .. }
            | NodeSpec::Shift { name, .. }
            | NodeSpec::Hamiltonian { name, .. }
            | NodeSpec::OptimalCost { name, .. }
            | NodeSpec::StateCost { name, .. }
            | NodeSpec::QuasiStatic { name, .. }
            | NodeSpec::FixedFrequency { name, .. }
            | NodeSpec::Band { name, .. }
            | NodeSpec::DurationPenalty { name, .. }
            | NodeSpec::Custom { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub node: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub cost: Vec<CostTerm>,
}

/// Objective supplied from code and referenced by name from a graph.
pub trait CustomObjective: Send + Sync {
    /// Expected length of the concatenated input.
    fn input_len(&self) -> usize;
    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)>;
}

pub type CustomFactory = Box<dyn Fn(&serde_json::Value) -> Result<Arc<dyn CustomObjective>> + Send + Sync>;

#[derive(Default)]
pub struct ObjectiveRegistry {
    factories: HashMap<String, CustomFactory>,
}

impl ObjectiveRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, factory: CustomFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.factories.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    fn create(&self, name: &str, params: &serde_json::Value) -> Result<Arc<dyn CustomObjective>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::Graph(format!("unknown custom objective '{name}'")))?;
        f(params)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Vector(usize),
    Signal(Segmentation),
    Operator { dim: usize, seg: Segmentation },
    Scalar,
}

enum Node {
    Variables { offset: usize, count: usize, scale: f64 },
    Fixed(Vec<f64>),
    Symmetrize(usize),
    Mask { input: usize, mask: Vec<f64> },
    Identity(usize),
    Linear { input: usize, matrix: DMatrix<f64> },
    Drive { modulus: usize, phase: Option<usize>, a_i: CMat, a_q: CMat },
    DriveIq { i: usize, q: usize, a_i: CMat, a_q: CMat },
    Shift { signal: usize, op: CMat },
    Hamiltonian { terms: Vec<usize>, drift: Option<CMat>, seg: Segmentation, dim: usize },
    OptimalCost { h: usize, target: CMat, p: Projector },
    StateCost { h: usize, initial: CVec, target: CVec },
    Filter { h: usize, noises: Vec<CMat>, freqs: Vec<f64>, coefs: Vec<f64>, p: Projector, opts: FilterOptions },
    DurationPenalty { input: usize, max: f64, unit: f64 },
    Custom { inputs: Vec<usize>, objective: Arc<dyn CustomObjective> },
}

#[derive(Debug, Clone)]
enum Value {
    Real(Vec<f64>),
    Operator(Vec<CMat>),
    Scalar(f64),
}

impl Value {
    fn real(&self) -> &[f64] {
        match self {
            Value::Real(v) => v,
            _ => unreachable!("shape checked at build time"),
        }
    }

    fn ops(&self) -> &[CMat] {
        match self {
            Value::Operator(v) => v,
            _ => unreachable!("shape checked at build time"),
        }
    }

    fn scalar(&self) -> f64 {
        match self {
            Value::Scalar(v) => *v,
            _ => unreachable!("shape checked at build time"),
        }
    }

    fn accumulate(&mut self, other: Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Value::Operator(a), Value::Operator(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Value::Scalar(a), Value::Scalar(b)) => *a += b,
            _ => unreachable!("cotangent shapes match values"),
        }
    }
}

/// Per-unit cotangent of a metric's Hamiltonian input, kept from the
/// forward pass.
struct Forward {
    values: Vec<Value>,
    local_bars: Vec<Option<Vec<CMat>>>,
    custom_grads: Vec<Option<Vec<f64>>>,
}

/// One metric value in a cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentValue {
    pub node: String,
    pub weight: f64,
    pub value: f64,
}

/// Named variable block with its position in the flat variable vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBlock {
    pub name: String,
    pub offset: usize,
    pub count: usize,
    pub scale: f64,
}

pub struct CostGraph {
    spec: GraphSpec,
    nodes: Vec<Node>,
    shapes: Vec<Shape>,
    index: HashMap<String, usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    blocks: Vec<VariableBlock>,
    cost: Vec<(usize, f64)>,
}

fn graph_err(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Graph(format!("node '{name}': {msg}"))
}

impl CostGraph {
    pub fn from_json(text: &str, registry: &ObjectiveRegistry) -> Result<Self> {
        let spec: GraphSpec = serde_json::from_str(text)?;
        Self::build(spec, registry)
    }

    pub fn build(spec: GraphSpec, registry: &ObjectiveRegistry) -> Result<Self> {
        let mut nodes = Vec::with_capacity(spec.nodes.len());
        let mut shapes: Vec<Shape> = Vec::with_capacity(spec.nodes.len());
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut blocks = Vec::new();

        for (k, ns) in spec.nodes.iter().enumerate() {
            let name = ns.name();
            if index.contains_key(name) {
                return Err(graph_err(name, "duplicate name"));
            }
            let lookup = |r: &str| -> Result<usize> {
                index
                    .get(r)
                    .copied()
                    .ok_or_else(|| graph_err(name, format!("unknown or later input '{r}'")))
            };
            let vector_len = |i: usize| -> Result<usize> {
                match &shapes[i] {
                    Shape::Vector(n) => Ok(*n),
                    _ => Err(graph_err(name, format!("input '{}' is not a vector", spec.nodes[i].name()))),
                }
            };
            let signal_seg = |i: usize| -> Result<Segmentation> {
                match &shapes[i] {
                    Shape::Signal(s) => Ok(s.clone()),
                    _ => Err(graph_err(name, format!("input '{}' is not a signal", spec.nodes[i].name()))),
                }
            };
            let operator_shape = |i: usize| -> Result<(usize, Segmentation)> {
                match &shapes[i] {
                    Shape::Operator { dim, seg } => Ok((*dim, seg.clone())),
                    _ => Err(graph_err(name, format!("input '{}' is not an operator", spec.nodes[i].name()))),
                }
            };
            let hamiltonian = |i: usize| -> Result<(usize, Segmentation)> {
                match (&nodes[i], &shapes[i]) {
                    (Node::Hamiltonian { .. }, Shape::Operator { dim, seg }) => Ok((*dim, seg.clone())),
                    _ => Err(graph_err(name, format!("input '{}' is not a hamiltonian", spec.nodes[i].name()))),
                }
            };
            let projector = |p: &Option<Projector>, dim: usize| -> Result<Projector> {
                let p = p.clone().unwrap_or_else(|| Projector::full(dim));
                if p.dimension() != dim {
                    return Err(graph_err(name, "projector dimension mismatch"));
                }
                Ok(p)
            };
            let square = |m: &MatrixJson, dim: Option<usize>| -> Result<CMat> {
                let m = m.to_matrix()?;
                if !m.is_square() || dim.is_some_and(|d| d != m.nrows()) {
                    return Err(graph_err(name, "operator dimension mismatch"));
                }
                Ok(m)
            };
            let hermitian = |m: &MatrixJson, dim: Option<usize>| -> Result<CMat> {
                let m = square(m, dim)?;
                if !is_hermitian(&m, 1e-10) {
                    return Err(graph_err(name, "operator must be Hermitian"));
                }
                Ok(m)
            };
            let filter_opts = |samples: &Option<usize>| FilterOptions { samples: *samples, ..Default::default() };

            let (node, shape) = match ns {
                NodeSpec::Variables { count, lower: lo, upper: hi, scale, .. } => {
                    if *count == 0 {
                        return Err(graph_err(name, "empty variable block"));
                    }
                    if !(scale.is_finite() && *scale != 0.0) {
                        return Err(graph_err(name, "scale must be finite and nonzero"));
                    }
                    let lo = lo.as_ref().map_or(Ok(vec![f64::NEG_INFINITY; *count]), |b| b.expand(*count))?;
                    let hi = hi.as_ref().map_or(Ok(vec![f64::INFINITY; *count]), |b| b.expand(*count))?;
                    if lo.iter().zip(&hi).any(|(l, u)| !(l <= u)) {
                        return Err(graph_err(name, "lower bound above upper bound"));
                    }
                    let offset = lower.len();
                    lower.extend(lo);
                    upper.extend(hi);
                    blocks.push(VariableBlock { name: name.to_string(), offset, count: *count, scale: *scale });
                    (Node::Variables { offset, count: *count, scale: *scale }, Shape::Vector(*count))
                }
                NodeSpec::Fixed { values, .. } => {
                    if values.is_empty() {
                        return Err(graph_err(name, "empty vector"));
                    }
                    (Node::Fixed(values.clone()), Shape::Vector(values.len()))
                }
                NodeSpec::Symmetrize { input, .. } => {
                    let i = lookup(input)?;
                    let n = vector_len(i)?;
                    (Node::Symmetrize(i), Shape::Vector(2 * n))
                }
                NodeSpec::Mask { input, mask, .. } => {
                    let i = lookup(input)?;
                    let n = vector_len(i)?;
                    if mask.len() != n {
                        return Err(graph_err(name, format!("mask length {} for {n} values", mask.len())));
                    }
                    if mask.iter().any(|&b| b != 0.0 && b != 1.0) {
                        return Err(graph_err(name, "mask entries must be 0 or 1"));
                    }
                    (Node::Mask { input: i, mask: mask.clone() }, Shape::Vector(n))
                }
                NodeSpec::Pwc { input, duration, .. } => {
                    let i = lookup(input)?;
                    let n = vector_len(i)?;
                    let seg = Segmentation::uniform(n, *duration).map_err(|e| graph_err(name, e))?;
                    (Node::Identity(i), Shape::Signal(seg))
                }
                NodeSpec::LtiFilter { input, kernel, segments, .. } => {
                    let i = lookup(input)?;
                    let seg = signal_seg(i)?;
                    let matrix = lti_matrix(&seg, kernel, *segments).map_err(|e| graph_err(name, e))?;
                    let out = Segmentation::uniform(*segments, seg.total())?;
                    (Node::Linear { input: i, matrix }, Shape::Signal(out))
                }
                NodeSpec::Crab { input, basis, duration, segments, .. } => {
                    let i = lookup(input)?;
                    let n = vector_len(i)?;
                    if basis.size() != n {
                        return Err(graph_err(name, format!("basis size {} for {n} coefficients", basis.size())));
                    }
                    let matrix = crab_matrix(basis, *duration, *segments).map_err(|e| graph_err(name, e))?;
                    let out = Segmentation::uniform(*segments, *duration).map_err(|e| graph_err(name, e))?;
                    (Node::Linear { input: i, matrix }, Shape::Signal(out))
                }
                NodeSpec::Drive { operator, modulus, phase, .. } => {
                    let op = square(operator, None)?;
                    let mi = lookup(modulus)?;
                    let seg = signal_seg(mi)?;
                    let pi = match phase {
                        Some(p) => {
                            let pi = lookup(p)?;
                            if !signal_seg(pi)?.approx_eq(&seg) {
                                return Err(graph_err(name, "modulus and phase segmentations differ"));
                            }
                            Some(pi)
                        }
                        None => None,
                    };
                    let (a_i, a_q) = drive_quadratures(&op);
                    let dim = op.nrows();
                    (Node::Drive { modulus: mi, phase: pi, a_i, a_q }, Shape::Operator { dim, seg })
                }
                NodeSpec::DriveIq { operator, i, q, .. } => {
                    let op = square(operator, None)?;
                    let ii = lookup(i)?;
                    let qi = lookup(q)?;
                    let seg = signal_seg(ii)?;
                    if !signal_seg(qi)?.approx_eq(&seg) {
                        return Err(graph_err(name, "I and Q segmentations differ"));
                    }
                    let (a_i, a_q) = drive_quadratures(&op);
                    let dim = op.nrows();
                    (Node::DriveIq { i: ii, q: qi, a_i, a_q }, Shape::Operator { dim, seg })
                }
                NodeSpec::Shift { operator, signal, .. } => {
                    let op = hermitian(operator, None)?;
                    let si = lookup(signal)?;
                    let seg = signal_seg(si)?;
                    let dim = op.nrows();
                    (Node::Shift { signal: si, op }, Shape::Operator { dim, seg })
                }
                NodeSpec::Hamiltonian { terms, drift, .. } => {
                    if terms.is_empty() {
                        return Err(graph_err(name, "a hamiltonian needs at least one term"));
                    }
                    let idx = terms.iter().map(|t| lookup(t)).collect::<Result<Vec<_>>>()?;
                    let (dim, seg) = operator_shape(idx[0])?;
                    for &t in &idx[1..] {
                        let (d, s) = operator_shape(t)?;
                        if d != dim {
                            return Err(graph_err(name, "term dimensions differ"));
                        }
                        if !s.approx_eq(&seg) {
                            return Err(graph_err(name, "term segmentations differ"));
                        }
                    }
                    let drift = drift.as_ref().map(|d| hermitian(d, Some(dim))).transpose()?;
                    (Node::Hamiltonian { terms: idx, drift, seg: seg.clone(), dim }, Shape::Operator { dim, seg })
                }
                NodeSpec::OptimalCost { hamiltonian: h, target, projector: p, .. } => {
                    let hi = lookup(h)?;
                    let (dim, _) = hamiltonian(hi)?;
                    let target = square(target, Some(dim))?;
                    (Node::OptimalCost { h: hi, target, p: projector(p, dim)? }, Shape::Scalar)
                }
                NodeSpec::StateCost { hamiltonian: h, initial, target, .. } => {
                    let hi = lookup(h)?;
                    let (dim, _) = hamiltonian(hi)?;
                    let (a, b) = (initial.to_vector(), target.to_vector());
                    if a.len() != dim || b.len() != dim {
                        return Err(graph_err(name, "state dimension mismatch"));
                    }
                    if (a.norm() - 1.0).abs() > 1e-8 || (b.norm() - 1.0).abs() > 1e-8 {
                        return Err(graph_err(name, "states must be normalized"));
                    }
                    (Node::StateCost { h: hi, initial: a, target: b }, Shape::Scalar)
                }
                NodeSpec::QuasiStatic { hamiltonian: h, noise_operators, projector: p, samples, .. } => {
                    let hi = lookup(h)?;
                    let (dim, _) = hamiltonian(hi)?;
                    if noise_operators.is_empty() {
                        return Err(graph_err(name, "no noise operators"));
                    }
                    let noises = noise_operators.iter().map(|n| hermitian(n, Some(dim))).collect::<Result<Vec<_>>>()?;
                    let node = Node::Filter {
                        h: hi,
                        noises,
                        freqs: vec![0.0],
                        coefs: vec![1.0 / (2.0 * PI)],
                        p: projector(p, dim)?,
                        opts: filter_opts(samples),
                    };
                    (node, Shape::Scalar)
                }
                NodeSpec::FixedFrequency { hamiltonian: h, noise_operator, frequency, projector: p, samples, .. } => {
                    let hi = lookup(h)?;
                    let (dim, _) = hamiltonian(hi)?;
                    let node = Node::Filter {
                        h: hi,
                        noises: vec![hermitian(noise_operator, Some(dim))?],
                        freqs: vec![*frequency],
                        coefs: vec![1.0 / (2.0 * PI)],
                        p: projector(p, dim)?,
                        opts: filter_opts(samples),
                    };
                    (node, Shape::Scalar)
                }
                NodeSpec::Band { hamiltonian: h, noise_operator, psd, band, points, projector: p, samples, .. } => {
                    let hi = lookup(h)?;
                    let (dim, _) = hamiltonian(hi)?;
                    let psd = OneSidedPsd::new(psd.samples.clone(), psd.resolution).map_err(|e| graph_err(name, e))?;
                    let [w1, w2] = *band;
                    if !(0.0 <= w1 && w1 < w2) || *points < 2 {
                        return Err(graph_err(name, "band must satisfy 0 ≤ ω₁ < ω₂ with at least two points"));
                    }
                    let dw = (w2 - w1) / (*points - 1) as f64;
                    let freqs: Vec<f64> = (0..*points).map(|i| w1 + i as f64 * dw).collect();
                    let coefs = freqs
                        .iter()
                        .enumerate()
                        .map(|(i, &w)| {
                            let end = if i == 0 || i == *points - 1 { 0.5 } else { 1.0 };
                            end * dw * psd.value_at(w) / (2.0 * PI)
                        })
                        .collect();
                    let node = Node::Filter {
                        h: hi,
                        noises: vec![hermitian(noise_operator, Some(dim))?],
                        freqs,
                        coefs,
                        p: projector(p, dim)?,
                        opts: filter_opts(samples),
                    };
                    (node, Shape::Scalar)
                }
                NodeSpec::DurationPenalty { input, max, unit, .. } => {
                    let i = lookup(input)?;
                    vector_len(i)?;
                    if !(*unit > 0.0) {
                        return Err(graph_err(name, "unit must be positive"));
                    }
                    (Node::DurationPenalty { input: i, max: *max, unit: *unit }, Shape::Scalar)
                }
                NodeSpec::Custom { objective, inputs, params, .. } => {
                    let idx = inputs.iter().map(|t| lookup(t)).collect::<Result<Vec<_>>>()?;
                    let mut total = 0;
                    for &i in &idx {
                        total += vector_len(i)?;
                    }
                    let obj = registry.create(objective, params).map_err(|e| graph_err(name, e))?;
                    if obj.input_len() != total {
                        return Err(graph_err(name, format!("objective expects {} inputs, got {total}", obj.input_len())));
                    }
                    (Node::Custom { inputs: idx, objective: obj }, Shape::Scalar)
                }
            };
            nodes.push(node);
            shapes.push(shape);
            index.insert(name.to_string(), k);
        }

        if lower.is_empty() {
            return Err(Error::Graph("graph has no variables".into()));
        }
        if spec.cost.is_empty() {
            return Err(Error::Graph("cost has no terms".into()));
        }
        let mut cost = Vec::new();
        for term in &spec.cost {
            let i = *index
                .get(&term.node)
                .ok_or_else(|| Error::Graph(format!("cost refers to unknown node '{}'", term.node)))?;
            if !matches!(shapes[i], Shape::Scalar) {
                return Err(Error::Graph(format!("cost term '{}' is not a scalar metric", term.node)));
            }
            if !(term.weight >= 0.0 && term.weight.is_finite()) {
                return Err(Error::Graph(format!("weight of '{}' must be finite and ≥ 0", term.node)));
            }
            cost.push((i, term.weight));
        }
        if !cost.iter().any(|(_, w)| *w > 0.0) {
            return Err(Error::Graph("at least one cost weight must be positive".into()));
        }
        Ok(Self { spec, nodes, shapes, index, lower, upper, blocks, cost })
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    /// Names of the scalar metric nodes.
    pub fn metric_names(&self) -> Vec<&str> {
        self.shapes
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Shape::Scalar))
            .map(|(i, _)| self.spec.nodes[i].name())
            .collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.lower.len() {
            return Err(Error::Shape(format!("expected {} variables, got {}", self.lower.len(), v.len())));
        }
        Ok(())
    }

    fn hamiltonian_of(&self, values: &[Value], i: usize) -> Result<PwcOperator> {
        let Node::Hamiltonian { seg, .. } = &self.nodes[i] else { unreachable!() };
        PwcOperator::new(values[i].ops().to_vec(), seg.clone())
    }

    fn forward(&self, v: &[f64], grad: bool) -> Result<Forward> {
        self.check_len(v)?;
        let n = self.nodes.len();
        let mut values: Vec<Value> = Vec::with_capacity(n);
        let mut local_bars = vec![None; n];
        let mut custom_grads = vec![None; n];
        for (k, node) in self.nodes.iter().enumerate() {
            let value = match node {
                Node::Variables { offset, count, scale } => {
                    Value::Real(v[*offset..offset + count].iter().map(|x| x * scale).collect())
                }
                Node::Fixed(x) => Value::Real(x.clone()),
                Node::Symmetrize(i) => Value::Real(symmetrize(values[*i].real())),
                Node::Mask { input, mask } => {
                    Value::Real(values[*input].real().iter().zip(mask).map(|(x, b)| x * b).collect())
                }
                Node::Identity(i) => values[*i].clone(),
                Node::Linear { input, matrix } => {
                    let x = DVector::from_column_slice(values[*input].real());
                    Value::Real((matrix * x).iter().copied().collect())
                }
                Node::Drive { modulus, phase, a_i, a_q } => {
                    let om = values[*modulus].real();
                    let ops = match phase {
                        Some(p) => om
                            .iter()
                            .zip(values[*p].real())
                            .map(|(&o, &ph)| a_i * c(o * ph.cos(), 0.0) + a_q * c(o * ph.sin(), 0.0))
                            .collect(),
                        None => om.iter().map(|&o| a_i * c(o, 0.0)).collect(),
                    };
                    Value::Operator(ops)
                }
                Node::DriveIq { i, q, a_i, a_q } => Value::Operator(
                    values[*i]
                        .real()
                        .iter()
                        .zip(values[*q].real())
                        .map(|(&x, &y)| a_i * c(x, 0.0) + a_q * c(y, 0.0))
                        .collect(),
                ),
                Node::Shift { signal, op } => {
                    Value::Operator(values[*signal].real().iter().map(|&a| op * c(a, 0.0)).collect())
                }
                Node::Hamiltonian { terms, drift, seg, dim } => {
                    let mut hs = vec![drift.clone().unwrap_or_else(|| CMat::zeros(*dim, *dim)); seg.len()];
                    for &t in terms {
                        hs.iter_mut().zip(values[t].ops()).for_each(|(h, x)| *h += x);
                    }
                    Value::Operator(hs)
                }
                Node::OptimalCost { h, target, p } => {
                    let hop = self.hamiltonian_of(&values, *h)?;
                    let tl = crate::filter::Timeline::new(&hop, &[hop.duration()])?;
                    let u = tl.sample_unitaries()[0].clone();
                    let f = subspace_overlap(&u, target, p)?;
                    if grad {
                        let tr = p.trace() as f64;
                        let u_bar = p.apply_left(&target.adjoint()).adjoint() * (f * c(-2.0 / tr, 0.0));
                        local_bars[k] = Some(tl.backward(&[u_bar]));
                    }
                    Value::Scalar((1.0 - f.norm_sqr()).max(0.0))
                }
                Node::StateCost { h, initial, target } => {
                    let hop = self.hamiltonian_of(&values, *h)?;
                    let tl = crate::filter::Timeline::new(&hop, &[hop.duration()])?;
                    let u = tl.sample_unitaries()[0];
                    let a = target.dotc(&(u * initial));
                    if grad {
                        let u_bar = target * initial.adjoint() * (a * c(-2.0, 0.0));
                        local_bars[k] = Some(tl.backward(&[u_bar]));
                    }
                    Value::Scalar((1.0 - a.norm_sqr()).max(0.0))
                }
                Node::Filter { h, noises, freqs, coefs, p, opts } => {
                    let hop = self.hamiltonian_of(&values, *h)?;
                    let mut total = 0.0;
                    let mut bars: Option<Vec<CMat>> = None;
                    for noise in noises {
                        let (val, hb) = weighted_filter_with_gradient(&hop, noise, p, freqs, coefs, opts)?;
                        total += val;
                        match &mut bars {
                            None => bars = Some(hb),
                            Some(b) => b.iter_mut().zip(hb).for_each(|(x, y)| *x += y),
                        }
                    }
                    if grad {
                        local_bars[k] = bars;
                    }
                    Value::Scalar(total)
                }
                Node::DurationPenalty { input, max, unit } => {
                    let tau: f64 = values[*input].real().iter().sum();
                    Value::Scalar(((tau - max).max(0.0) / unit).powi(2))
                }
                Node::Custom { inputs, objective } => {
                    let x: Vec<f64> = inputs.iter().flat_map(|&i| values[i].real().iter().copied()).collect();
                    let (val, g) = objective.value_and_gradient(&x)?;
                    if grad {
                        custom_grads[k] = Some(g);
                    }
                    Value::Scalar(val)
                }
            };
            values.push(value);
        }
        Ok(Forward { values, local_bars, custom_grads })
    }

    fn backward(&self, fwd: &Forward, seeds: &[(usize, f64)]) -> Vec<f64> {
        let n = self.nodes.len();
        let mut bars: Vec<Option<Value>> = vec![None; n];
        let add = |bars: &mut Vec<Option<Value>>, i: usize, val: Value| match &mut bars[i] {
            Some(b) => b.accumulate(val),
            None => bars[i] = Some(val),
        };
        for &(i, w) in seeds {
            add(&mut bars, i, Value::Scalar(w));
        }
        let mut grad = vec![0.0; self.lower.len()];
        for k in (0..n).rev() {
            let Some(bar) = bars[k].take() else { continue };
            match &self.nodes[k] {
                Node::Variables { offset, scale, .. } => {
                    for (g, b) in grad[*offset..].iter_mut().zip(bar.real()) {
                        *g += scale * b;
                    }
                }
                Node::Fixed(_) => {}
                Node::Symmetrize(i) => add(&mut bars, *i, Value::Real(symmetrize_adjoint(bar.real()))),
                Node::Mask { input, mask } => {
                    add(&mut bars, *input, Value::Real(bar.real().iter().zip(mask).map(|(x, b)| x * b).collect()))
                }
                Node::Identity(i) => add(&mut bars, *i, bar),
                Node::Linear { input, matrix } => {
                    let y = DVector::from_column_slice(bar.real());
                    add(&mut bars, *input, Value::Real((matrix.transpose() * y).iter().copied().collect()));
                }
                Node::Drive { modulus, phase, a_i, a_q } => {
                    let hb = bar.ops();
                    let om = fwd.values[*modulus].real();
                    match phase {
                        Some(p) => {
                            let ph = fwd.values[*p].real();
                            let mut om_bar = Vec::with_capacity(hb.len());
                            let mut ph_bar = Vec::with_capacity(hb.len());
                            for ((b, &o), &f) in hb.iter().zip(om).zip(ph) {
                                let (ri, rq) = (re_inner(b, a_i), re_inner(b, a_q));
                                om_bar.push(f.cos() * ri + f.sin() * rq);
                                ph_bar.push(o * (-f.sin() * ri + f.cos() * rq));
                            }
                            add(&mut bars, *modulus, Value::Real(om_bar));
                            add(&mut bars, *p, Value::Real(ph_bar));
                        }
                        None => add(&mut bars, *modulus, Value::Real(hb.iter().map(|b| re_inner(b, a_i)).collect())),
                    }
                }
                Node::DriveIq { i, q, a_i, a_q } => {
                    let hb = bar.ops();
                    add(&mut bars, *i, Value::Real(hb.iter().map(|b| re_inner(b, a_i)).collect()));
                    add(&mut bars, *q, Value::Real(hb.iter().map(|b| re_inner(b, a_q)).collect()));
                }
                Node::Shift { signal, op } => {
                    add(&mut bars, *signal, Value::Real(bar.ops().iter().map(|b| re_inner(b, op)).collect()))
                }
                Node::Hamiltonian { terms, .. } => {
                    for &t in terms {
                        add(&mut bars, t, bar.clone());
                    }
                }
                Node::OptimalCost { h, .. } | Node::StateCost { h, .. } | Node::Filter { h, .. } => {
                    let s = bar.scalar();
                    if s != 0.0 {
                        if let Some(lb) = &fwd.local_bars[k] {
                            add(&mut bars, *h, Value::Operator(lb.iter().map(|m| m * c(s, 0.0)).collect()));
                        }
                    }
                }
                Node::DurationPenalty { input, max, unit } => {
                    let x = fwd.values[*input].real();
                    let excess = (x.iter().sum::<f64>() - max).max(0.0);
                    let d = bar.scalar() * 2.0 * excess / (unit * unit);
                    add(&mut bars, *input, Value::Real(vec![d; x.len()]));
                }
                Node::Custom { inputs, .. } => {
                    let s = bar.scalar();
                    let g = fwd.custom_grads[k].as_ref().expect("custom gradient kept");
                    let mut off = 0;
                    for &i in inputs {
                        let len = fwd.values[i].real().len();
                        add(&mut bars, i, Value::Real(g[off..off + len].iter().map(|x| x * s).collect()));
                        off += len;
                    }
                }
            }
        }
        grad
    }

    fn total(&self, fwd: &Forward) -> f64 {
        self.cost.iter().map(|&(i, w)| w * fwd.values[i].scalar()).sum()
    }

    pub fn evaluate(&self, v: &[f64]) -> Result<f64> {
        Ok(self.total(&self.forward(v, false)?))
    }

    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(v)?.1)
    }

    /// Value and gradient of a single scalar node, ignoring the cost weights.
    pub fn component_value_and_gradient(&self, v: &[f64], node: &str) -> Result<(f64, Vec<f64>)> {
        let i = *self.index.get(node).ok_or_else(|| Error::Graph(format!("unknown node '{node}'")))?;
        if !matches!(self.shapes[i], Shape::Scalar) {
            return Err(Error::Graph(format!("node '{node}' is not a scalar metric")));
        }
        let fwd = self.forward(v, true)?;
        let value = fwd.values[i].scalar();
        Ok((value, self.backward(&fwd, &[(i, 1.0)])))
    }

    /// Weighted metric values making up the cost.
    pub fn components(&self, v: &[f64]) -> Result<Vec<ComponentValue>> {
        let fwd = self.forward(v, false)?;
        Ok(self
            .cost
            .iter()
            .map(|&(i, w)| ComponentValue {
                node: self.spec.nodes[i].name().to_string(),
                weight: w,
                value: fwd.values[i].scalar(),
            })
            .collect())
    }

    /// Values of a vector or signal node; signals also return their
    /// segmentation.
    pub fn signal(&self, v: &[f64], node: &str) -> Result<(Vec<f64>, Option<Segmentation>)> {
        let i = *self.index.get(node).ok_or_else(|| Error::Graph(format!("unknown node '{node}'")))?;
        let fwd = self.forward_until(v, i)?;
        match &self.shapes[i] {
            Shape::Vector(_) => Ok((fwd[i].real().to_vec(), None)),
            Shape::Signal(s) => Ok((fwd[i].real().to_vec(), Some(s.clone()))),
            _ => Err(Error::Graph(format!("node '{node}' is not a vector or signal"))),
        }
    }

    /// The PWC operator produced by an operator-valued node.
    pub fn operator(&self, v: &[f64], node: &str) -> Result<PwcOperator> {
        let i = *self.index.get(node).ok_or_else(|| Error::Graph(format!("unknown node '{node}'")))?;
        let Shape::Operator { seg, .. } = &self.shapes[i] else {
            return Err(Error::Graph(format!("node '{node}' is not operator-valued")));
        };
        let fwd = self.forward_until(v, i)?;
        PwcOperator::new(fwd[i].ops().to_vec(), seg.clone())
    }

    /// Names of the signal-valued nodes in declaration order.
    pub fn signal_names(&self) -> Vec<&str> {
        self.shapes
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Shape::Signal(_)))
            .map(|(i, _)| self.spec.nodes[i].name())
            .collect()
    }

    fn forward_until(&self, v: &[f64], last: usize) -> Result<Vec<Value>> {
        let fwd = self.forward(v, false)?;
        Ok(fwd.values.into_iter().take(last + 1).collect())
    }
}

impl Objective for CostGraph {
    fn dimension(&self) -> usize {
        self.lower.len()
    }

    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward(v, true)?;
        let value = self.total(&fwd);
        Ok((value, self.backward(&fwd, &self.cost)))
    }

    fn value(&self, v: &[f64]) -> Result<f64> {
        self.evaluate(v)
    }
}
