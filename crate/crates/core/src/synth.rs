//! Random and toy networks for tests, benchmarks, and property checks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{is_connected, Graph, TopologySet};
use crate::netmodel::{equilibrium_solve, DaiParams, PowerNetwork};

/// Two unit nodes joined by a unit line with injections `(p, −p)`.
pub fn two_node_network(p: f64) -> PowerNetwork {
    PowerNetwork::new(
        DVector::from_element(2, 1.0),
        DVector::from_element(2, 1.0),
        DVector::from_element(2, 1.0),
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]),
        DVector::from_row_slice(&[p, -p]),
        DVector::zeros(2),
        0.0,
    )
    .expect("valid two-node network")
}

/// Parameter ranges for [`random_case`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRanges {
    pub inertia: (f64, f64),
    pub damping: (f64, f64),
    pub susceptance: (f64, f64),
    pub voltage: (f64, f64),
    pub p_set: (f64, f64),
    pub g_load: (f64, f64),
    pub cost: (f64, f64),
    pub base_gain: (f64, f64),
    /// Probability of each extra electrical line beyond a spanning ring.
    pub chord_prob: f64,
    pub topologies: usize,
}

impl Default for SynthRanges {
    fn default() -> Self {
        Self {
            inertia: (0.1, 0.5),
            damping: (0.5, 1.5),
            susceptance: (-3.0, -1.0),
            voltage: (0.95, 1.05),
            p_set: (-0.3, 0.3),
            g_load: (0.0, 0.1),
            cost: (0.5, 1.5),
            base_gain: (0.5, 1.5),
            chord_prob: 0.3,
            topologies: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub net: PowerNetwork,
    pub dai: DaiParams,
    pub ts: TopologySet,
    pub theta_star: DVector<f64>,
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Connected communication topologies: the ring, then rings with one random
/// link removed (distinct where possible).
pub fn random_topologies(rng: &mut ChaCha8Rng, n: usize, count: usize) -> TopologySet {
    let ring = Graph::ring(n);
    let mut graphs = vec![ring.clone()];
    let mut edges = ring.edges().to_vec();
    edges.shuffle(rng);
    for &(i, k) in edges.iter().cycle().take(count.saturating_sub(1)) {
        let g = ring.without_edge(i, k);
        graphs.push(if is_connected(&g) { g } else { ring.clone() });
    }
    TopologySet::new(graphs).expect("topologies share a node set")
}

/// Random connected network with a secure equilibrium, deterministic in `seed`.
pub fn random_case(seed: u64, n: usize, ranges: &SynthRanges) -> SynthCase {
    assert!(n >= 2, "random_case needs at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut b = DMatrix::zeros(n, n);
        let link = |b: &mut DMatrix<f64>, i: usize, k: usize, rng: &mut ChaCha8Rng| {
            let w = sample(rng, ranges.susceptance);
            b[(i, k)] = w;
            b[(k, i)] = w;
        };
        for &(i, k) in Graph::ring(n).edges() {
            link(&mut b, i, k, &mut rng);
        }
        for i in 0..n {
            for k in i + 1..n {
                if b[(i, k)] == 0.0 && rng.random_bool(ranges.chord_prob) {
                    link(&mut b, i, k, &mut rng);
                }
            }
        }
        let vec = |rng: &mut ChaCha8Rng, r| DVector::from_fn(n, |_, _| sample(rng, r));
        let net = PowerNetwork::new(
            vec(&mut rng, ranges.inertia),
            vec(&mut rng, ranges.damping),
            vec(&mut rng, ranges.voltage),
            b,
            vec(&mut rng, ranges.p_set),
            vec(&mut rng, ranges.g_load),
            0.0,
        )
        .expect("sampled network is valid");
        let dai = DaiParams::new(
            vec(&mut rng, ranges.cost),
            vec(&mut rng, ranges.base_gain),
            1.0,
        )
        .expect("sampled gains are positive");
        let ts = random_topologies(&mut rng, n, ranges.topologies);
        if let Ok(eq) = equilibrium_solve(&net, &dai, &DVector::zeros(n)) {
            if eq.secure && eq.max_angle_diff < 1.2 {
                return SynthCase {
                    net,
                    dai,
                    ts,
                    theta_star: eq.theta,
                };
            }
        }
    }
}
