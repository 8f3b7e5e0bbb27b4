//! JSON run configuration.
//!
//! Node and line indices are 1-based in the file. Electrical data (inertia,
//! voltage, setpoints, loads, lines) may be `null`; the certificate only needs
//! damping, cost weights, gains, topologies, and delay bounds.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{
    CertifyOptions, CertifySetup, ChannelMode, DelayBounds, Psi44Coupling, SdpOptions,
};
use crate::graph::{validate_topology_set, Graph, TopologySet};
use crate::netmodel::{machine_to_system_damping, with_equilibrium, DaiParams, PowerNetwork};
use crate::simulate::{DelayPairing, Interpolation, SimOptions};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Physics(String),
    #[error("{0}")]
    Io(String),
}

impl ConfigError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse(_) => 3,
            ConfigError::Schema(_) => 4,
            ConfigError::Physics(_) => 5,
            ConfigError::Io(_) => 2,
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSection,
    pub comm: CommSection,
    pub delays: DelaySection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub certify: CertifySection,
}

/// Which base the `d_machine` values are applied on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingBase {
    /// `D_i = d_machine · s_rated / s_base`.
    #[default]
    System,
    /// `D_i = d_machine`.
    Machine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub s_base: Option<f64>,
    #[serde(default)]
    pub omega_nom: f64,
    #[serde(default)]
    pub damping_base: DampingBase,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub lines: Option<Vec<LineConfig>>,
    /// Named equilibrium angle vectors, `θ* = scale · angles`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub operating_points: BTreeMap<String, OperatingPointConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    /// Inertia.
    #[serde(default)]
    pub m: Option<f64>,
    /// Damping on the system base; overrides `d_machine`.
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub d_machine: Option<f64>,
    #[serde(default)]
    pub s_rated: Option<f64>,
    /// Voltage magnitude.
    #[serde(default)]
    pub v: Option<f64>,
    /// Power setpoint.
    #[serde(default)]
    pub p: Option<f64>,
    /// Shunt load conductance.
    #[serde(default)]
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub i: usize,
    pub k: usize,
    /// Susceptance `B_ik` (negative).
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointConfig {
    pub angles: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    /// Edge lists, one per topology.
    pub topologies: Vec<Vec<[usize; 2]>>,
    /// Diagonal of `A`.
    pub cost: Vec<f64>,
    /// Diagonal of `𝒦`.
    pub base_gain: Vec<f64>,
    #[serde(default = "one")]
    pub kappa: f64,
}

/// A single bound for every channel or one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelayBoundSpec {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub h: DelayBoundSpec,
    #[serde(default = "default_ts")]
    pub ts: f64,
    /// Per-link mode ties both directions of a link to one delay, both in the
    /// certificate and in simulation.
    #[serde(default)]
    pub channels: ChannelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    pub dwell: f64,
    pub seed: u64,
    pub trials: usize,
    pub tol_freq: f64,
    pub tol_cost: f64,
    pub window: f64,
    pub stride: usize,
    /// Half-width of the box of initial deviations.
    pub radius: f64,
    pub stop_on_convergence: bool,
    pub operating_point: Option<String>,
}

impl Default for SimSection {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            dt: o.dt,
            t_end: o.t_end,
            dwell: o.dwell,
            seed: 0,
            trials: 20,
            tol_freq: o.tol_freq,
            tol_cost: o.tol_cost,
            window: o.window,
            stride: o.stride,
            radius: 0.1,
            stop_on_convergence: o.stop_on_convergence,
            operating_point: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub delta_rel: f64,
    pub tol_kappa: f64,
    pub kappa_init: f64,
    /// Also re-check the witness at pairwise midpoints of the vertices.
    pub hull: bool,
    pub psi44: Psi44Coupling,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            delta_rel: 1e-7,
            tol_kappa: 1e-3,
            kappa_init: 2.0,
            hull: true,
            psi44: Psi44Coupling::default(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_ts() -> f64 {
    SimOptions::default().ts
}

fn physics(msg: impl Into<String>) -> ConfigError {
    ConfigError::Physics(msg.into())
}

fn positive(path: &str, x: f64) -> CResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(physics(format!("{path}: must be positive, got {x}")))
    }
}

/// Parses and validates; `origin` prefixes error locations.
pub fn parse_config(text: &str, origin: &str) -> CResult<Config> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| {
        let msg = format!("{origin}:{}:{}: {e}", e.line(), e.column());
        match e.classify() {
            serde_json::error::Category::Data => ConfigError::Schema(msg),
            _ => ConfigError::Parse(msg),
        }
    })?;
    cfg.validate().map_err(|e| match e {
        ConfigError::Schema(m) => ConfigError::Schema(format!("{origin}: {m}")),
        ConfigError::Physics(m) => ConfigError::Physics(format!("{origin}: {m}")),
        other => other,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

pub fn to_json(cfg: &Config) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

pub fn write_config(cfg: &Config, path: &Path) -> CResult<()> {
    std::fs::write(path, to_json(cfg) + "\n")
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
}

impl Config {
    pub fn n(&self) -> usize {
        self.network.nodes.len()
    }

    /// Checks everything that can be checked without electrical data.
    pub fn validate(&self) -> CResult<()> {
        let n = self.n();
        if n < 2 {
            return Err(ConfigError::Schema(
                "network.nodes: need at least two nodes".into(),
            ));
        }
        for (name, v) in [
            ("comm.cost", &self.comm.cost),
            ("comm.base_gain", &self.comm.base_gain),
        ] {
            if v.len() != n {
                return Err(ConfigError::Schema(format!(
                    "{name}: expected {n} entries, got {}",
                    v.len()
                )));
            }
            for (i, &x) in v.iter().enumerate() {
                positive(&format!("{name}[{i}]"), x)?;
            }
        }
        if !(self.comm.kappa >= 0.0 && self.comm.kappa.is_finite()) {
            return Err(physics(format!(
                "comm.kappa: must be >= 0, got {}",
                self.comm.kappa
            )));
        }
        if let Some(b) = self.network.s_base {
            positive("network.s_base", b)?;
        }
        self.damping()?;
        for (i, node) in self.network.nodes.iter().enumerate() {
            for (field, val) in [("m", node.m), ("v", node.v), ("s_rated", node.s_rated)] {
                if let Some(x) = val {
                    positive(&format!("network.nodes[{i}].{field}"), x)?;
                }
            }
            if let Some(g) = node.g {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(physics(format!(
                        "network.nodes[{i}].g: must be >= 0, got {g}"
                    )));
                }
            }
        }
        if let Some(lines) = &self.network.lines {
            for (j, l) in lines.iter().enumerate() {
                if l.i == 0 || l.k == 0 || l.i > n || l.k > n || l.i == l.k {
                    return Err(ConfigError::Schema(format!(
                        "network.lines[{j}]: endpoints ({}, {}) must be distinct nodes in 1..={n}",
                        l.i, l.k
                    )));
                }
                if !(l.b < 0.0 && l.b.is_finite()) {
                    return Err(physics(format!(
                        "network.lines[{j}].b: susceptance must be negative, got {}",
                        l.b
                    )));
                }
            }
        }
        for (name, op) in &self.network.operating_points {
            if op.angles.len() != n {
                return Err(ConfigError::Schema(format!(
                    "network.operating_points.{name}: expected {n} angles, got {}",
                    op.angles.len()
                )));
            }
        }
        let ts = self.topologies()?;
        let mode = self.delays.channels;
        if let DelayBoundSpec::PerChannel(h) = &self.delays.h {
            let want = mode.count(ts.channel_count());
            if h.len() != want {
                return Err(ConfigError::Schema(format!(
                    "delays.h: expected {want} bounds, got {}",
                    h.len()
                )));
            }
        }
        self.bounds()?;
        positive("delays.ts", self.delays.ts)?;
        let s = &self.sim;
        for (name, x) in [
            ("sim.dt", s.dt),
            ("sim.t_end", s.t_end),
            ("sim.dwell", s.dwell),
            ("sim.window", s.window),
        ] {
            positive(name, x)?;
        }
        if s.dt > self.delays.ts {
            return Err(physics(format!(
                "sim.dt ({}) exceeds delays.ts ({})",
                s.dt, self.delays.ts
            )));
        }
        if s.stride == 0 || s.trials == 0 {
            return Err(ConfigError::Schema(
                "sim.stride and sim.trials must be >= 1".into(),
            ));
        }
        if let Some(name) = &s.operating_point {
            if !self.network.operating_points.contains_key(name) {
                return Err(ConfigError::Schema(format!(
                    "sim.operating_point: unknown name {name:?}"
                )));
            }
        }
        let c = &self.certify;
        positive("certify.tol_kappa", c.tol_kappa)?;
        positive("certify.kappa_init", c.kappa_init)?;
        if !(c.delta_rel >= 0.0) {
            return Err(physics("certify.delta_rel: must be >= 0"));
        }
        Ok(())
    }

    /// Damping on the system base.
    pub fn damping(&self) -> CResult<DVector<f64>> {
        let net = &self.network;
        let mut d = DVector::zeros(self.n());
        for (i, node) in net.nodes.iter().enumerate() {
            let path = format!("network.nodes[{i}]");
            d[i] = match (node.d, node.d_machine) {
                (Some(d), _) => d,
                (None, Some(dm)) => match net.damping_base {
                    DampingBase::Machine => dm,
                    DampingBase::System => {
                        let (Some(s), Some(b)) = (node.s_rated, net.s_base) else {
                            return Err(ConfigError::Schema(format!(
                                "{path}: d_machine on the system base needs s_rated and network.s_base"
                            )));
                        };
                        machine_to_system_damping(dm, s, b)
                    }
                },
                (None, None) => {
                    return Err(ConfigError::Schema(format!("{path}: needs d or d_machine")))
                }
            };
            positive(&format!("{path}.d"), d[i])?;
        }
        Ok(d)
    }

    pub fn dai(&self, kappa: f64) -> CResult<DaiParams> {
        DaiParams::new(
            DVector::from_vec(self.comm.cost.clone()),
            DVector::from_vec(self.comm.base_gain.clone()),
            kappa,
        )
        .map_err(|e| physics(e.to_string()))
    }

    pub fn topologies(&self) -> CResult<TopologySet> {
        let n = self.n();
        if self.comm.topologies.is_empty() {
            return Err(ConfigError::Schema(
                "comm.topologies: at least one topology required".into(),
            ));
        }
        let mut graphs = Vec::new();
        for (ell, edges) in self.comm.topologies.iter().enumerate() {
            if let Some(e) = edges
                .iter()
                .find(|e| e[0] == 0 || e[1] == 0 || e[0] > n || e[1] > n)
            {
                return Err(ConfigError::Schema(format!(
                    "comm.topologies[{ell}]: edge {e:?} outside 1..={n}"
                )));
            }
            let g = Graph::new(n, edges.iter().map(|e| (e[0] - 1, e[1] - 1)))
                .map_err(|e| ConfigError::Schema(format!("comm.topologies[{ell}]: {e}")))?;
            graphs.push(g);
        }
        let ts = TopologySet::new(graphs)
            .map_err(|e| ConfigError::Schema(format!("comm.topologies: {e}")))?;
        if let Some(ell) = validate_topology_set(&ts).first_disconnected() {
            return Err(physics(format!(
                "comm.topologies[{ell}]: graph is not connected"
            )));
        }
        Ok(ts)
    }

    /// Bounds for the certificate, one per delay of the channel mode.
    pub fn bounds(&self) -> CResult<DelayBounds> {
        let count = self
            .delays
            .channels
            .count(self.topologies()?.channel_count());
        let b = match &self.delays.h {
            DelayBoundSpec::Uniform(h) => DelayBounds::uniform(*h, count),
            DelayBoundSpec::PerChannel(h) => DelayBounds::new(h.clone()),
        };
        b.map_err(|e| physics(format!("delays.h: {e}")))
    }

    /// Bounds per directed channel, for generating delay signals.
    pub fn channel_bounds(&self) -> CResult<Vec<f64>> {
        let b = self.bounds()?;
        Ok(match self.delays.channels {
            ChannelMode::Directed => b.h.clone(),
            ChannelMode::PerLink => b.h.iter().flat_map(|&h| [h, h]).collect(),
        })
    }

    pub fn pairing(&self) -> DelayPairing {
        match self.delays.channels {
            ChannelMode::Directed => DelayPairing::Independent,
            ChannelMode::PerLink => DelayPairing::PerLink,
        }
    }

    pub fn certify_setup(&self) -> CResult<CertifySetup> {
        Ok(CertifySetup {
            damping: self.damping()?,
            dai: self.dai(self.comm.kappa)?,
            ts: self.topologies()?,
            bounds: self.bounds()?,
            options: CertifyOptions {
                delta_rel: self.certify.delta_rel,
                coupling: self.certify.psi44,
                channels: self.delays.channels,
                extra_vertices: Vec::new(),
                sdp: SdpOptions::default(),
            },
        })
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.sim;
        SimOptions {
            dt: s.dt,
            ts: self.delays.ts,
            dwell: s.dwell,
            tol_freq: s.tol_freq,
            tol_cost: s.tol_cost,
            window: s.window,
            t_end: s.t_end,
            stride: s.stride,
            stop_on_convergence: s.stop_on_convergence,
            interpolation: Interpolation::default(),
            ..SimOptions::default()
        }
    }

    pub fn has_electrical_data(&self) -> bool {
        self.network.lines.is_some()
            && self
                .network
                .nodes
                .iter()
                .all(|n| n.m.is_some() && n.v.is_some() && n.p.is_some())
    }

    /// The physical network; fails with a schema error when electrical data
    /// is missing. A selected operating point moves the setpoints onto it.
    pub fn network(&self) -> CResult<PowerNetwork> {
        let n = self.n();
        let missing = |what: &str| {
            ConfigError::Schema(format!(
                "{what} is null; electrical data is required for this command"
            ))
        };
        let lines = self
            .network
            .lines
            .as_ref()
            .ok_or_else(|| missing("network.lines"))?;
        let field = |get: fn(&NodeConfig) -> Option<f64>, name: &str, default: Option<f64>| {
            let mut v = DVector::zeros(n);
            for (i, node) in self.network.nodes.iter().enumerate() {
                v[i] = get(node)
                    .or(default)
                    .ok_or_else(|| missing(&format!("network.nodes[{i}].{name}")))?;
            }
            Ok::<_, ConfigError>(v)
        };
        let m = field(|x| x.m, "m", None)?;
        let v = field(|x| x.v, "v", None)?;
        let p = field(|x| x.p, "p", None)?;
        let g = field(|x| x.g, "g", Some(0.0))?;
        let mut b = DMatrix::zeros(n, n);
        for (j, l) in lines.iter().enumerate() {
            let (i, k) = (l.i - 1, l.k - 1);
            if b[(i, k)] != 0.0 {
                return Err(ConfigError::Schema(format!(
                    "network.lines[{j}]: duplicate line ({}, {})",
                    l.i, l.k
                )));
            }
            b[(i, k)] = l.b;
            b[(k, i)] = l.b;
        }
        let net = PowerNetwork::new(m, self.damping()?, v, b, p, g, self.network.omega_nom)
            .map_err(|e| physics(format!("network: {e}")))?;
        match &self.sim.operating_point {
            Some(name) => {
                let theta = self.operating_point(name)?;
                with_equilibrium(&net, &self.dai(self.comm.kappa)?, &theta)
                    .map_err(|e| physics(e.to_string()))
            }
            None => Ok(net),
        }
    }

    pub fn operating_point(&self, name: &str) -> CResult<DVector<f64>> {
        let op = self
            .network
            .operating_points
            .get(name)
            .ok_or_else(|| ConfigError::Schema(format!("unknown operating point {name:?}")))?;
        Ok(DVector::from_iterator(
            op.angles.len(),
            op.angles.iter().map(|a| a * op.scale),
        ))
    }
}

/// The Kundur two-area preset without electrical data.
pub fn kundur_preset() -> Config {
    let s_rated = [700.0, 700.0, 719.0, 700.0];
    let s_base = 900.0;
    let d_machine = 1.0 / (0.05 * 2.0 * std::f64::consts::PI * 60.0);
    let cost: Vec<f64> = s_rated.iter().map(|s| s / s_base).collect();
    let ring = vec![[1, 2], [2, 3], [3, 4], [1, 4]];
    let minus = |drop: [usize; 2]| {
        ring.iter()
            .copied()
            .filter(|e| *e != drop)
            .collect::<Vec<_>>()
    };
    let point = |angles: [f64; 4], scale| OperatingPointConfig {
        angles: angles.to_vec(),
        scale,
    };
    Config {
        description: Some(
            "Kundur four-machine two-area system. Electrical fields (m, v, p, g, lines) are \
             placeholders to be filled from the published dataset."
                .into(),
        ),
        network: NetworkSection {
            s_base: Some(s_base),
            omega_nom: 0.0,
            damping_base: DampingBase::System,
            nodes: s_rated
                .iter()
                .map(|&s| NodeConfig {
                    d_machine: Some(d_machine),
                    s_rated: Some(s),
                    ..Default::default()
                })
                .collect(),
            lines: None,
            operating_points: BTreeMap::from([
                (
                    "z1".to_string(),
                    point([0.224, 0.117, -0.076, -0.189], FRAC_PI_2),
                ),
                (
                    "z2".to_string(),
                    point([0.3, -0.4, -0.5, 0.4], 3.0 * std::f64::consts::PI / 8.0),
                ),
                ("z3".to_string(), point([0.3, -0.4, -0.5, 0.4], FRAC_PI_2)),
            ]),
        },
        comm: CommSection {
            topologies: vec![ring.clone(), minus([1, 2]), minus([2, 3]), minus([3, 4])],
            base_gain: cost.iter().map(|a| 0.05 / a).collect(),
            cost,
            kappa: 1.544,
        },
        delays: DelaySection {
            h: DelayBoundSpec::Uniform(2.0),
            ts: 2e-3,
            channels: ChannelMode::PerLink,
        },
        sim: SimSection {
            operating_point: Some("z1".into()),
            ..SimSection::default()
        },
        certify: CertifySection {
            psi44: Psi44Coupling::Full,
            ..CertifySection::default()
        },
    }
}
