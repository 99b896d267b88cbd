//! Lumped model of the metamaterial: a grid of point masses moving out of
//! plane, joined along grid edges by rotational springs with a bilinear
//! (leaky-ReLU) moment-rotation law.
//!
//! Edge rotation is `theta = (w_b - w_a) / L`. A law with orientation `s`
//! is compliant (`k_soft`) while `s * theta <= gap` and stiff
//! (`slope_ratio * k_soft`) beyond it. Edge moments act on the end nodes as
//! an equal-and-opposite transverse force pair `M / L`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::state::{SensorKind, SensorMeta, StateMatrix};

/// Internal steps per period of the stiffest mode. Twenty already keeps the
/// explicit scheme stable; the extra resolution keeps first-order phase
/// error in the sampled readouts well under one percent.
pub const STEPS_PER_PERIOD: f64 = 100.0;

/// Bilinear rotational stiffness law of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLaw {
    pub k_soft: f64,
    pub slope_ratio: f64,
    /// Rotation at which the stiff branch engages, radians.
    pub gap: f64,
    /// +1 or -1: which rotation direction closes the gap.
    pub orientation: i8,
}

impl EdgeLaw {
    pub fn new(k_soft: f64, slope_ratio: f64, gap: f64, orientation: i8) -> Result<Self> {
        if !(k_soft.is_finite() && k_soft > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "k_soft must be positive, got {k_soft}"
            )));
        }
        if !(slope_ratio.is_finite() && slope_ratio >= 1.0) {
            return Err(Error::InvalidLattice(format!(
                "slope ratio must be >= 1, got {slope_ratio}"
            )));
        }
        if !(gap.is_finite() && gap >= 0.0) {
            return Err(Error::InvalidLattice(format!(
                "gap must be >= 0, got {gap}"
            )));
        }
        if orientation != 1 && orientation != -1 {
            return Err(Error::InvalidLattice(format!(
                "orientation must be +1 or -1, got {orientation}"
            )));
        }
        Ok(Self {
            k_soft,
            slope_ratio,
            gap,
            orientation,
        })
    }

    fn sign(&self) -> f64 {
        f64::from(self.orientation)
    }

    pub fn moment(&self, theta: f64) -> f64 {
        edge_moment(self, theta)
    }

    /// Stored elastic energy; its derivative in `theta` is [`EdgeLaw::moment`].
    pub fn energy(&self, theta: f64) -> f64 {
        let t = self.sign() * theta;
        let k = self.k_soft;
        if t <= self.gap {
            0.5 * k * t * t
        } else {
            let over = t - self.gap;
            0.5 * k * self.gap * self.gap
                + k * self.gap * over
                + 0.5 * self.slope_ratio * k * over * over
        }
    }
}

pub fn edge_moment(law: &EdgeLaw, theta: f64) -> f64 {
    let s = law.sign();
    let t = s * theta;
    let m = if t <= law.gap {
        law.k_soft * t
    } else {
        law.k_soft * law.gap + law.slope_ratio * law.k_soft * (t - law.gap)
    };
    s * m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: Axis,
    pub orientation: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
    /// kg per node.
    pub node_mass: f64,
    /// Edge length, m.
    pub spacing: f64,
    /// Soft-branch stiffness, N m/rad. `None` tunes it so the linearized
    /// fundamental sits at `fundamental_hz`.
    pub k_soft: Option<f64>,
    pub fundamental_hz: f64,
    pub slope_ratio: f64,
    pub gap_deg: f64,
    /// Rayleigh damping ratio at the linearized fundamental.
    pub damping_ratio: f64,
    /// `[row, col]`; defaults to the grid center.
    pub drive_node: Option<[usize; 2]>,
    pub seed: u64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            node_mass: 1e-3,
            spacing: 0.02,
            k_soft: None,
            fundamental_hz: 10.0,
            slope_ratio: 10.0,
            gap_deg: 2.0,
            damping_ratio: 0.02,
            drive_node: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub rows: usize,
    pub cols: usize,
    pub node_mass: f64,
    pub spacing: f64,
    pub k_soft: f64,
    pub slope_ratio: f64,
    /// Radians.
    pub gap: f64,
    /// Mass-proportional damping coefficient, 1/s.
    pub alpha_m: f64,
    /// Stiffness-proportional damping coefficient, s.
    pub beta_k: f64,
    pub drive_node: usize,
    pub clamped: Vec<usize>,
    pub edges: Vec<Edge>,
    pub seed: u64,
}

/// Displacement and velocity of every node at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl LatticeState {
    pub fn at_rest(nodes: usize) -> Self {
        Self {
            w: vec![0.0; nodes],
            v: vec![0.0; nodes],
            t: 0.0,
        }
    }
}

/// Sampled node displacements and velocities, one row per output sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub displacement: DMatrix<f64>,
    pub velocity: DMatrix<f64>,
    pub sample_rate: f64,
    /// Internal integration step, s.
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.displacement.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.displacement.nrows() == 0
    }

    pub fn state(&self, i: usize) -> LatticeState {
        LatticeState {
            w: self.displacement.row(i).iter().copied().collect(),
            v: self.velocity.row(i).iter().copied().collect(),
            t: i as f64 / self.sample_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub output_rate: f64,
    /// Integration steps per output sample. `None` picks the smallest count
    /// with `dt <= 1 / (20 f_max)`, `f_max` taken with every edge stiff.
    pub substeps: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            output_rate: 500.0,
            substeps: None,
        }
    }
}

pub fn build_lattice(config: &LatticeConfig) -> Result<LatticeModel> {
    let LatticeConfig { rows, cols, .. } = *config;
    if rows < 2 || cols < 3 {
        return Err(Error::InvalidLattice(format!(
            "grid must be at least 2x3 so a free column exists, got {rows}x{cols}"
        )));
    }
    for (name, value) in [
        ("node_mass", config.node_mass),
        ("spacing", config.spacing),
        ("fundamental_hz", config.fundamental_hz),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    if !(config.damping_ratio.is_finite() && config.damping_ratio >= 0.0) {
        return Err(Error::InvalidLattice("damping_ratio must be >= 0".into()));
    }
    let gap = config.gap_deg.to_radians();
    // Validate law parameters once; k_soft may still be unknown here.
    EdgeLaw::new(config.k_soft.unwrap_or(1.0), config.slope_ratio, gap, 1)?;

    let node = |r: usize, c: usize| r * cols + c;
    let clamped: Vec<usize> = (0..rows)
        .flat_map(|r| [node(r, 0), node(r, cols - 1)])
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut orientation = || if rng.gen_bool(0.5) { 1 } else { -1 };
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols - 1 {
            edges.push(Edge {
                a: node(r, c),
                b: node(r, c + 1),
                axis: Axis::Horizontal,
                orientation: orientation(),
            });
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            edges.push(Edge {
                a: node(r, c),
                b: node(r + 1, c),
                axis: Axis::Vertical,
                orientation: orientation(),
            });
        }
    }

    let drive_node = match config.drive_node {
        Some([r, c]) if r < rows && c < cols => node(r, c),
        Some([r, c]) => {
            return Err(Error::InvalidLattice(format!(
                "drive node ({r}, {c}) outside grid"
            )));
        }
        None => node(rows / 2, cols / 2),
    };
    if clamped.contains(&drive_node) {
        return Err(Error::DriveNodeClamped(drive_node));
    }

    let mut model = LatticeModel {
        rows,
        cols,
        node_mass: config.node_mass,
        spacing: config.spacing,
        k_soft: config.k_soft.unwrap_or(1.0),
        slope_ratio: config.slope_ratio,
        gap,
        alpha_m: 0.0,
        beta_k: 0.0,
        drive_node,
        clamped,
        edges,
        seed: config.seed,
    };
    let omega_target = 2.0 * std::f64::consts::PI * config.fundamental_hz;
    if config.k_soft.is_none() {
        let lambda_min = model.unit_stiffness_eigenvalues()[0];
        model.k_soft = config.node_mass * omega_target * omega_target / lambda_min;
    }
    EdgeLaw::new(model.k_soft, model.slope_ratio, model.gap, 1)?;
    let omega1 = 2.0 * std::f64::consts::PI * model.natural_frequencies()[0];
    model.alpha_m = config.damping_ratio * omega1;
    model.beta_k = config.damping_ratio / omega1;
    Ok(model)
}

impl LatticeModel {
    pub fn n_nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.clamped.binary_search(&node).is_ok()
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| !self.is_clamped(i))
            .collect()
    }

    pub fn edge_law(&self, edge: &Edge) -> EdgeLaw {
        EdgeLaw {
            k_soft: self.k_soft,
            slope_ratio: self.slope_ratio,
            gap: self.gap,
            orientation: edge.orientation,
        }
    }

    pub fn orientations(&self) -> Vec<i8> {
        self.edges.iter().map(|e| e.orientation).collect()
    }

    /// Same lattice with every edge law collapsed to its soft linear branch.
    pub fn linearized(&self) -> Self {
        Self {
            slope_ratio: 1.0,
            gap: 0.0,
            ..self.clone()
        }
    }

    /// Eigenvalues (ascending) of the free-node stiffness matrix built with
    /// unit rotational stiffness on every edge.
    fn unit_stiffness_eigenvalues(&self) -> Vec<f64> {
        let free = self.free_nodes();
        let index: Vec<Option<usize>> = (0..self.n_nodes())
            .map(|i| free.iter().position(|&f| f == i))
            .collect();
        let k = 1.0 / (self.spacing * self.spacing);
        let mut stiffness = DMatrix::<f64>::zeros(free.len(), free.len());
        for e in &self.edges {
            let (ia, ib) = (index[e.a], index[e.b]);
            if let Some(a) = ia {
                stiffness[(a, a)] += k;
            }
            if let Some(b) = ib {
                stiffness[(b, b)] += k;
            }
            if let (Some(a), Some(b)) = (ia, ib) {
                stiffness[(a, b)] -= k;
                stiffness[(b, a)] -= k;
            }
        }
        let mut values: Vec<f64> = SymmetricEigen::new(stiffness)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Natural frequencies in Hz of the soft-branch linear system, ascending.
    pub fn natural_frequencies(&self) -> Vec<f64> {
        self.scaled_frequencies(1.0)
    }

    fn scaled_frequencies(&self, stiffness_factor: f64) -> Vec<f64> {
        self.unit_stiffness_eigenvalues()
            .into_iter()
            .map(|l| {
                (stiffness_factor * self.k_soft * l.max(0.0) / self.node_mass).sqrt()
                    / (2.0 * std::f64::consts::PI)
            })
            .collect()
    }

    /// Highest frequency reachable with every edge on its stiff branch.
    pub fn max_frequency(&self) -> f64 {
        *self
            .scaled_frequencies(self.slope_ratio)
            .last()
            .expect("lattice has free nodes")
    }

    /// Substeps per output sample: at least `STEPS_PER_PERIOD` internal steps
    /// per period of the stiffest mode.
    pub fn default_substeps(&self, output_rate: f64) -> usize {
        ((STEPS_PER_PERIOD * self.max_frequency() / output_rate).ceil() as usize).max(1)
    }

    fn theta(&self, e: &Edge, w: &[f64]) -> f64 {
        (w[e.b] - w[e.a]) / self.spacing
    }

    /// Kinetic energy plus stored elastic energy of every edge.
    pub fn mechanical_energy(&self, state: &LatticeState) -> f64 {
        let kinetic: f64 = state.v.iter().map(|v| 0.5 * self.node_mass * v * v).sum();
        let elastic: f64 = self
            .edges
            .iter()
            .map(|e| self.edge_law(e).energy(self.theta(e, &state.w)))
            .sum();
        kinetic + elastic
    }

    /// Elastic plus damping nodal forces.
    fn internal_forces(&self, w: &[f64], v: &[f64], out: &mut [f64]) {
        let l = self.spacing;
        let k_lin = self.k_soft / (l * l);
        for (i, f) in out.iter_mut().enumerate() {
            *f = -self.alpha_m * self.node_mass * v[i];
        }
        for e in &self.edges {
            let m = edge_moment(&self.edge_law(e), (w[e.b] - w[e.a]) / l);
            let damp = self.beta_k * k_lin * (v[e.b] - v[e.a]);
            let pair = m / l + damp;
            out[e.b] -= pair;
            out[e.a] += pair;
        }
    }
}

/// Integrate the lattice under a force applied at `drive_node`, sampling the
/// state at `options.output_rate`. Uses semi-implicit (symplectic) Euler.
pub fn integrate(
    model: &LatticeModel,
    forcing: &TimeSeries,
    drive_node: usize,
    options: SimOptions,
    initial: Option<&LatticeState>,
) -> Result<Trajectory> {
    let nodes = model.n_nodes();
    if drive_node >= nodes {
        return Err(Error::InvalidLattice(format!(
            "drive node {drive_node} out of range"
        )));
    }
    if model.is_clamped(drive_node) {
        return Err(Error::DriveNodeClamped(drive_node));
    }
    if (forcing.sample_rate() - options.output_rate).abs() > 1e-9 * options.output_rate {
        return Err(Error::RateMismatch {
            forcing: forcing.sample_rate(),
            output: options.output_rate,
        });
    }
    let substeps = options
        .substeps
        .unwrap_or_else(|| model.default_substeps(options.output_rate));
    if substeps == 0 {
        return Err(Error::InvalidLattice("substeps must be >= 1".into()));
    }
    let dt = 1.0 / (options.output_rate * substeps as f64);

    let mut state = match initial {
        Some(s) if s.w.len() == nodes && s.v.len() == nodes => s.clone(),
        Some(_) => {
            return Err(Error::InvalidLattice(
                "initial state has wrong node count".into(),
            ))
        }
        None => LatticeState::at_rest(nodes),
    };
    for &c in &model.clamped {
        state.w[c] = 0.0;
        state.v[c] = 0.0;
    }
    let free = model.free_nodes();
    let limit = 1e3 * model.spacing;
    let samples = forcing.values();
    let len = samples.len();
    let mut displacement = DMatrix::zeros(len, nodes);
    let mut velocity = DMatrix::zeros(len, nodes);
    let mut forces = vec![0.0; nodes];
    let inv_mass = 1.0 / model.node_mass;

    for n in 0..len {
        for i in 0..nodes {
            displacement[(n, i)] = state.w[i];
            velocity[(n, i)] = state.v[i];
        }
        if n + 1 == len {
            break;
        }
        let (f0, f1) = (samples[n], samples[n + 1]);
        for s in 0..substeps {
            let load = f0 + (f1 - f0) * s as f64 / substeps as f64;
            model.internal_forces(&state.w, &state.v, &mut forces);
            forces[drive_node] += load;
            for &i in &free {
                state.v[i] += dt * forces[i] * inv_mass;
            }
            for &i in &free {
                state.w[i] += dt * state.v[i];
                if !state.w[i].is_finite() || state.w[i].abs() > limit {
                    return Err(Error::Unstable {
                        step: n * substeps + s,
                        time: state.t,
                        suggested_dt: dt / 2.0,
                    });
                }
            }
            state.t += dt;
        }
    }
    Ok(Trajectory {
        displacement,
        velocity,
        sample_rate: options.output_rate,
        dt,
    })
}

/// Integrate from rest and extract the readouts.
pub fn simulate(
    model: &LatticeModel,
    forcing: &TimeSeries,
    drive_node: usize,
    output_rate: f64,
) -> Result<StateMatrix> {
    let options = SimOptions {
        output_rate,
        substeps: None,
    };
    let trajectory = integrate(model, forcing, drive_node, options, None)?;
    extract_readouts(model, &trajectory)
}

/// Readout metadata in column order: horizontal edge rotations, vertical
/// edge rotations, `kxx` at interior-column nodes, `kyy` at interior-row nodes.
pub fn readout_layout(model: &LatticeModel) -> Vec<SensorMeta> {
    let mut sensors = Vec::new();
    for e in &model.edges {
        let (row, col) = (e.a / model.cols, e.a % model.cols);
        let (kind, prefix) = match e.axis {
            Axis::Horizontal => (SensorKind::EdgeX, "ex"),
            Axis::Vertical => (SensorKind::EdgeY, "ey"),
        };
        sensors.push(SensorMeta {
            id: format!("{prefix}_r{row}c{col}"),
            kind,
            row,
            col,
        });
    }
    for row in 0..model.rows {
        for col in 1..model.cols - 1 {
            sensors.push(SensorMeta {
                id: format!("kxx_r{row}c{col}"),
                kind: SensorKind::Kxx,
                row,
                col,
            });
        }
    }
    for row in 1..model.rows - 1 {
        for col in 0..model.cols {
            sensors.push(SensorMeta {
                id: format!("kyy_r{row}c{col}"),
                kind: SensorKind::Kyy,
                row,
                col,
            });
        }
    }
    sensors
}

/// One row of readouts from a displacement field.
pub fn readouts_of(model: &LatticeModel, w: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let l = model.spacing;
    let l2 = l * l;
    out.extend(model.edges.iter().map(|e| (w[e.b] - w[e.a]) / l));
    for row in 0..model.rows {
        for col in 1..model.cols - 1 {
            let i = model.node(row, col);
            out.push((w[i - 1] - 2.0 * w[i] + w[i + 1]) / l2);
        }
    }
    for row in 1..model.rows - 1 {
        for col in 0..model.cols {
            let i = model.node(row, col);
            out.push((w[i - model.cols] - 2.0 * w[i] + w[i + model.cols]) / l2);
        }
    }
}

pub fn extract_readouts(model: &LatticeModel, trajectory: &Trajectory) -> Result<StateMatrix> {
    let sensors = readout_layout(model);
    let len = trajectory.len();
    let mut data = DMatrix::zeros(len, sensors.len());
    let mut row = Vec::with_capacity(sensors.len());
    let mut w = vec![0.0; model.n_nodes()];
    for t in 0..len {
        for (i, x) in w.iter_mut().enumerate() {
            *x = trajectory.displacement[(t, i)];
        }
        readouts_of(model, &w, &mut row);
        for (j, v) in row.iter().enumerate() {
            data[(t, j)] = *v;
        }
    }
    StateMatrix::new(data, trajectory.sample_rate, sensors)
}
