use crate::crypto::derive_seed;
use crate::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

/// Link failure model. An edge carries a per-direction good/bad status; a
/// message sent along a bad direction is silently dropped that round.
/// Whatever the mode, sampled statuses are only accepted when the honest
/// nodes stay strongly connected over good directions within the stored
/// diameter bound, so protocol guarantees keep their premises.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BadEdgeMode {
    /// every direction of every edge is good
    None,
    /// statuses drawn once at build time and held for the whole run
    Fixed { p: f64 },
    /// statuses redrawn every round
    PerRound { p: f64 },
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("need target_degree < max_degree < n, got {target}/{max}/{n}")]
    BadDegrees { target: u32, max: u32, n: u32 },
    #[error("malicious fraction {0} outside [0, 0.99]")]
    BadFraction(f64),
    #[error("bad-edge probability {0} outside [0, 1)")]
    BadProbability(f64),
    #[error("no connected honest subgraph after {attempts} attempts, reseed")]
    Disconnected { attempts: u32 },
    #[error("topology needs at least 2 nodes, got {0}")]
    TooSmall(u32),
}

/// The overlay: undirected adjacency, per-node honesty, per-direction link
/// statuses, and the two quantities the protocol consumes, the degree bound
/// `w` and the honest-subgraph diameter `d`.
#[derive(Debug, Clone)]
pub struct Topology {
    n: u32,
    w: u32,
    d: u32,
    adj: Vec<Vec<u32>>,
    honest: Vec<bool>,
    mode: BadEdgeMode,
    fixed_bad: BTreeSet<(u32, u32)>,
    seed: u64,
}

/// Builds the overlay the way deployed nodes would: every node keeps
/// initiating edges to uniformly random peers until it holds `target_degree`
/// of them, and a peer accepts as long as its own degree is below
/// `max_degree`. `floor(f * n)` nodes, chosen uniformly, are malicious.
/// The honest diameter is computed exactly and stored; a disconnected draw
/// is retried under a fresh derived seed before giving up.
pub fn build_topology(
    n: u32,
    target_degree: u32,
    max_degree: u32,
    f: f64,
    seed: u64,
) -> Result<Topology, TopologyError> {
    build_topology_with(n, target_degree, max_degree, f, seed, BadEdgeMode::None)
}

pub fn build_topology_with(
    n: u32,
    target_degree: u32,
    max_degree: u32,
    f: f64,
    seed: u64,
    mode: BadEdgeMode,
) -> Result<Topology, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooSmall(n));
    }
    if !(target_degree < max_degree && max_degree < n) {
        return Err(TopologyError::BadDegrees { target: target_degree, max: max_degree, n });
    }
    if !(0.0..=0.99).contains(&f) {
        return Err(TopologyError::BadFraction(f));
    }
    if let BadEdgeMode::Fixed { p } | BadEdgeMode::PerRound { p } = mode {
        if !(0.0..1.0).contains(&p) {
            return Err(TopologyError::BadProbability(p));
        }
    }

    const ATTEMPTS: u32 = 64;
    'attempt: for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha12Rng::from_seed(derive_seed(seed, "topology", &[attempt as u64]));
        let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n as usize];
        for u in 0..n as usize {
            let mut tries = 0u32;
            let cap = 200 * n;
            while (adj[u].len() as u32) < target_degree && tries < cap {
                tries += 1;
                let v = rng.random_range(0..n) as usize;
                if v == u || adj[u].contains(&(v as u32)) || adj[v].len() as u32 >= max_degree {
                    continue;
                }
                adj[u].insert(v as u32);
                adj[v].insert(u as u32);
            }
            if (adj[u].len() as u32) < target_degree {
                continue 'attempt;
            }
        }
        let adj: Vec<Vec<u32>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();

        let malicious = (f * n as f64).floor() as usize;
        let mut honest = vec![true; n as usize];
        for i in rand::seq::index::sample(&mut rng, n as usize, malicious) {
            honest[i] = false;
        }

        let fixed_bad = match mode {
            BadEdgeMode::Fixed { p } => sample_bad(&mut rng, &adj, p),
            _ => BTreeSet::new(),
        };
        let Some(base_d) = honest_diameter(&adj, &honest, &fixed_bad) else {
            continue 'attempt;
        };

        // Under per-round statuses the stored bound must also cover rounds
        // with links down, so probe a few draws and keep the worst diameter.
        let mut d = base_d;
        if let BadEdgeMode::PerRound { p } = mode {
            for probe in 0..8u64 {
                let mut widened = false;
                for retry in 0..16u64 {
                    let mut prng = ChaCha12Rng::from_seed(derive_seed(
                        seed,
                        "bad-probe",
                        &[attempt as u64, probe, retry],
                    ));
                    let bad = sample_bad(&mut prng, &adj, p);
                    if let Some(dd) = honest_diameter(&adj, &honest, &bad) {
                        d = d.max(dd);
                        widened = true;
                        break;
                    }
                }
                if !widened {
                    continue 'attempt;
                }
            }
        }

        let w = adj.iter().map(|nb| nb.len() as u32).max().unwrap_or(0).max(max_degree);
        return Ok(Topology { n, w, d, adj, honest, mode, fixed_bad, seed });
    }
    Err(TopologyError::Disconnected { attempts: ATTEMPTS })
}

impl Topology {
    /// Explicit construction from an edge list, for tests and toy models.
    /// `w` is the realized maximum degree, `d` the exact honest diameter.
    pub fn from_edges(
        n: u32,
        edges: &[(u32, u32)],
        honest: &[bool],
    ) -> Result<Topology, TopologyError> {
        assert_eq!(honest.len(), n as usize);
        if n < 2 {
            return Err(TopologyError::TooSmall(n));
        }
        let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n as usize];
        for (u, v) in edges {
            assert!(u != v && *u < n && *v < n, "bad edge ({u}, {v})");
            adj[*u as usize].insert(*v);
            adj[*v as usize].insert(*u);
        }
        let adj: Vec<Vec<u32>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let d = honest_diameter(&adj, honest, &BTreeSet::new())
            .ok_or(TopologyError::Disconnected { attempts: 1 })?;
        let w = adj.iter().map(|nb| nb.len() as u32).max().unwrap_or(0);
        Ok(Topology {
            n,
            w,
            d,
            adj,
            honest: honest.to_vec(),
            mode: BadEdgeMode::None,
            fixed_bad: BTreeSet::new(),
            seed: 0,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Degree bound `w` (no node exceeds it, by construction).
    pub fn w(&self) -> u32 {
        self.w
    }

    /// Honest-subgraph diameter: exact eccentricity maximum over honest
    /// nodes, good directions only, covering every sampled status draw.
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        self.honest[node.index()]
    }

    pub fn neighbors(&self, node: NodeId) -> &[u32] {
        &self.adj[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> u32 {
        self.adj[node.index()].len() as u32
    }

    pub fn honest_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId).filter(|id| self.is_honest(*id))
    }

    pub fn malicious_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId).filter(|id| !self.is_honest(*id))
    }

    pub fn mode(&self) -> BadEdgeMode {
        self.mode
    }

    /// Directed bad set in effect for `round`. Per-round draws are rejected
    /// (and redrawn) unless the honest subgraph keeps its diameter bound;
    /// after too many rejections the round runs with all links good, which
    /// also satisfies the bound.
    pub fn bad_edges_for_round(&self, round: u64) -> BTreeSet<(u32, u32)> {
        match self.mode {
            BadEdgeMode::None => BTreeSet::new(),
            BadEdgeMode::Fixed { .. } => self.fixed_bad.clone(),
            BadEdgeMode::PerRound { p } => {
                for retry in 0..16u64 {
                    let mut rng = ChaCha12Rng::from_seed(derive_seed(
                        self.seed,
                        "bad-round",
                        &[round, retry],
                    ));
                    let bad = sample_bad(&mut rng, &self.adj, p);
                    if honest_diameter(&self.adj, &self.honest, &bad)
                        .is_some_and(|dd| dd <= self.d)
                    {
                        return bad;
                    }
                }
                BTreeSet::new()
            }
        }
    }
}

fn sample_bad<R: Rng>(rng: &mut R, adj: &[Vec<u32>], p: f64) -> BTreeSet<(u32, u32)> {
    let mut bad = BTreeSet::new();
    for (u, nbrs) in adj.iter().enumerate() {
        for v in nbrs {
            if rng.random::<f64>() < p {
                bad.insert((u as u32, *v));
            }
        }
    }
    bad
}

/// Exact diameter of the honest subgraph under the given bad set: max over
/// honest sources of BFS depth along good directions through honest nodes.
/// `None` when some honest pair is unreachable.
pub(crate) fn honest_diameter(
    adj: &[Vec<u32>],
    honest: &[bool],
    bad: &BTreeSet<(u32, u32)>,
) -> Option<u32> {
    let n = adj.len();
    let honest_count = honest.iter().filter(|h| **h).count();
    if honest_count == 0 {
        return None;
    }
    let mut diameter = 0u32;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        if !honest[src] {
            continue;
        }
        dist.fill(u32::MAX);
        queue.clear();
        dist[src] = 0;
        queue.push_back(src as u32);
        let mut seen = 1usize;
        let mut ecc = 0u32;
        while let Some(u) = queue.pop_front() {
            for v in &adj[u as usize] {
                let vi = *v as usize;
                if honest[vi] && dist[vi] == u32::MAX && !bad.contains(&(u, *v)) {
                    dist[vi] = dist[u as usize] + 1;
                    ecc = ecc.max(dist[vi]);
                    seen += 1;
                    queue.push_back(*v);
                }
            }
        }
        if seen != honest_count {
            return None;
        }
        diameter = diameter.max(ecc);
    }
    Some(diameter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clique_has_diameter_one() {
        let edges: Vec<(u32, u32)> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let t = Topology::from_edges(4, &edges, &[true; 4]).unwrap();
        assert_eq!(t.d(), 1);
        assert_eq!(t.w(), 3);
    }

    #[test]
    fn line_has_diameter_n_minus_one() {
        let t = Topology::from_edges(3, &[(0, 1), (1, 2)], &[true; 3]).unwrap();
        assert_eq!(t.d(), 2);
    }

    #[test]
    fn malicious_cut_vertex_disconnects() {
        // 0 - 1 - 2 with 1 malicious: honest 0 and 2 cannot reach each other
        let r = Topology::from_edges(3, &[(0, 1), (1, 2)], &[true, false, true]);
        assert!(matches!(r, Err(TopologyError::Disconnected { .. })));
    }

    #[test]
    fn build_respects_degree_bounds_and_connects() {
        let t = build_topology(60, 6, 13, 0.5, 7).unwrap();
        assert_eq!(t.n(), 60);
        assert_eq!(t.malicious_ids().count(), 30);
        for u in 0..60 {
            let deg = t.degree(NodeId(u));
            assert!((6..=13).contains(&deg), "node {u} degree {deg}");
        }
        assert!(t.d() >= 1);
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let a = build_topology(40, 5, 11, 0.4, 3).unwrap();
        let b = build_topology(40, 5, 11, 0.4, 3).unwrap();
        assert_eq!(a.adj, b.adj);
        assert_eq!(a.honest, b.honest);
        assert_eq!(a.d(), b.d());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            build_topology(10, 5, 5, 0.0, 1),
            Err(TopologyError::BadDegrees { .. })
        ));
        assert!(matches!(build_topology(10, 3, 6, 1.5, 1), Err(TopologyError::BadFraction(_))));
        assert!(matches!(build_topology(1, 0, 0, 0.0, 1), Err(TopologyError::TooSmall(1))));
    }

    #[test]
    fn fixed_bad_edges_keep_honest_subgraph_connected() {
        let t =
            build_topology_with(50, 6, 13, 0.3, 11, BadEdgeMode::Fixed { p: 0.2 }).unwrap();
        let bad = t.bad_edges_for_round(0);
        assert_eq!(bad, t.bad_edges_for_round(5), "fixed statuses must not move");
        assert!(honest_diameter(&t.adj, &t.honest, &bad).is_some());
    }

    #[test]
    fn per_round_bad_edges_respect_diameter_bound() {
        let t =
            build_topology_with(50, 6, 13, 0.3, 11, BadEdgeMode::PerRound { p: 0.2 }).unwrap();
        for round in 0..12 {
            let bad = t.bad_edges_for_round(round);
            let dd = honest_diameter(&t.adj, &t.honest, &bad).expect("connected");
            assert!(dd <= t.d(), "round {round}: {dd} > {}", t.d());
        }
    }
}
