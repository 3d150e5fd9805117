//! Simulator-side ground-truth routing.
//!
//! Routes are hop-count shortest paths that never transit an end host. Among
//! equal-length candidates the lexicographically smallest node-id sequence
//! wins, computed from the smaller host id of the pair; the opposite
//! direction reuses the same links in reverse.
//!
//! A route is expressed as the components a transfer passes through: the
//! source host, the egress interface at every router hop, then the
//! destination host.

use std::collections::{HashMap, VecDeque};

use super::Topology;
use crate::error::{Error, Result};

/// Ordered `(src, dst)` host pairs, lexicographic by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathIndex {
    pairs: Vec<(String, String)>,
}

impl PathIndex {
    pub fn new(topology: &Topology) -> Self {
        let mut hosts: Vec<&String> = topology.hosts().iter().collect();
        hosts.sort();
        let pairs = hosts
            .iter()
            .flat_map(|&s| {
                hosts
                    .iter()
                    .filter(move |&&d| d != s)
                    .map(move |&d| (s.clone(), d.clone()))
            })
            .collect();
        PathIndex { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Path ids in `src>dst` form, as used in CSV headers.
    pub fn labels(&self) -> Vec<String> {
        self.pairs.iter().map(|(s, d)| format!("{s}>{d}")).collect()
    }

    pub fn position(&self, src: &str, dst: &str) -> Option<usize> {
        self.pairs
            .binary_search_by(|(s, d)| (s.as_str(), d.as_str()).cmp(&(src, dst)))
            .ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingTable {
    paths: PathIndex,
    routes: Vec<Vec<usize>>,
}

impl RoutingTable {
    pub fn path_index(&self) -> &PathIndex {
        &self.paths
    }

    /// Component sequence of path `p` (position in the path index).
    pub fn route_at(&self, p: usize) -> &[usize] {
        &self.routes[p]
    }

    pub fn route(&self, src: &str, dst: &str) -> Option<&[usize]> {
        self.paths.position(src, dst).map(|p| self.routes[p].as_slice())
    }

    pub fn routes(&self) -> impl Iterator<Item = &[usize]> {
        self.routes.iter().map(Vec::as_slice)
    }

    /// `membership[c]` lists the path positions whose route contains component `c`.
    pub fn membership(&self, n_components: usize) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); n_components];
        for (p, route) in self.routes.iter().enumerate() {
            for &c in route {
                m[c].push(p);
            }
        }
        m
    }
}

pub fn compute_routes(topology: &Topology) -> Result<RoutingTable> {
    let paths = PathIndex::new(topology);
    let mut node_paths: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut routes = Vec::with_capacity(paths.len());

    for (src, dst) in paths.pairs() {
        let s = topology.node_of(src).expect("host in topology");
        let d = topology.node_of(dst).expect("host in topology");
        let nodes = if src < dst {
            let p = shortest_lex_path(topology, s, d)?;
            node_paths.insert((s, d), p.clone());
            p
        } else {
            // The pair with the smaller id was visited first.
            let mut p = node_paths[&(d, s)].clone();
            p.reverse();
            p
        };
        routes.push(to_components(topology, &nodes));
    }
    Ok(RoutingTable { paths, routes })
}

fn shortest_lex_path(t: &Topology, src: usize, dst: usize) -> Result<Vec<usize>> {
    // Hop distances to `dst`; hosts other than the endpoints are never expanded.
    let mut dist = vec![usize::MAX; t.node_count()];
    dist[dst] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(u) = queue.pop_front() {
        if u != dst && t.is_host(u) {
            continue;
        }
        for &(v, _) in t.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist[src] == usize::MAX {
        return Err(Error::Disconnected(format!(
            "no route from `{}` to `{}`",
            t.node_id(src),
            t.node_id(dst)
        )));
    }

    let mut path = vec![src];
    let mut u = src;
    while u != dst {
        u = t
            .neighbors(u)
            .iter()
            .map(|&(v, _)| v)
            .filter(|&v| dist[v] + 1 == dist[u] && (v == dst || !t.is_host(v)))
            .min_by(|&a, &b| t.node_id(a).cmp(t.node_id(b)))
            .expect("distance labels are consistent");
        path.push(u);
    }
    Ok(path)
}

fn to_components(t: &Topology, nodes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(nodes.len());
    out.push(t.host_component(nodes[0]));
    for w in nodes.windows(2) {
        let (u, v) = (w[0], w[1]);
        if !t.is_host(u) {
            let link = t
                .neighbors(u)
                .iter()
                .find(|&&(n, _)| n == v)
                .map(|&(_, l)| l)
                .expect("consecutive route nodes are adjacent");
            out.push(t.interface_component(u, link));
        }
    }
    out.push(t.host_component(nodes[nodes.len() - 1]));
    out
}
