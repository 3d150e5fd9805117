use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Link, Topology};
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const PRESET_NAMES: [&str; 3] = ["internet2-like", "ring", "random"];

/// Backbone mesh (10 core routers) plus 5 dual-homed access routers.
///
/// Every router serves exactly one end host, which keeps each of the 102
/// components' corrupted-path sets distinct under hop-count routing. The
/// link list is fixed; router interfaces total 15 + 2 * 36 = 87.
const INTERNET2_CORE: [(&str, &str); 36] = [
    ("a0", "c4"),
    ("a0", "c7"),
    ("a1", "c5"),
    ("a1", "c6"),
    ("a2", "c0"),
    ("a2", "c6"),
    ("a3", "c6"),
    ("a3", "c7"),
    ("a4", "c3"),
    ("a4", "c8"),
    ("c0", "c1"),
    ("c0", "c3"),
    ("c0", "c4"),
    ("c0", "c6"),
    ("c0", "c9"),
    ("c1", "c2"),
    ("c1", "c3"),
    ("c1", "c7"),
    ("c1", "c9"),
    ("c2", "c3"),
    ("c2", "c4"),
    ("c2", "c6"),
    ("c2", "c8"),
    ("c3", "c4"),
    ("c4", "c5"),
    ("c4", "c7"),
    ("c4", "c8"),
    ("c4", "c9"),
    ("c5", "c6"),
    ("c5", "c8"),
    ("c5", "c9"),
    ("c6", "c7"),
    ("c6", "c8"),
    ("c6", "c9"),
    ("c7", "c8"),
    ("c8", "c9"),
];

/// Generator parameters for the `random` preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomTopologyParams {
    pub hosts: usize,
    pub routers: usize,
    /// Probability that any given router pair is linked.
    pub edge_probability: f64,
    /// Graphs are resampled until the router graph is connected.
    pub max_attempts: usize,
}

impl Default for RandomTopologyParams {
    fn default() -> Self {
        RandomTopologyParams {
            hosts: 8,
            routers: 6,
            edge_probability: 0.4,
            max_attempts: 100,
        }
    }
}

pub fn build_preset(name: &str, seed: u64) -> Result<Topology> {
    match name {
        "internet2-like" => Ok(internet2_like()),
        "ring" => Ok(ring()),
        "random" => build_random(&RandomTopologyParams::default(), seed),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn internet2_like() -> Topology {
    let core: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
    let access: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
    let hosts: Vec<String> = (0..15).map(|i| format!("h{i:02}")).collect();
    let mut links: Vec<Link> = hosts
        .iter()
        .zip(core.iter().chain(access.iter()))
        .map(|(h, r)| Link::new(h.as_str(), r.as_str()))
        .collect();
    links.extend(INTERNET2_CORE.iter().map(|&(a, b)| Link::new(a, b)));
    let routers = core.into_iter().chain(access).collect();
    Topology::new("internet2-like", hosts, routers, links).expect("preset wiring is valid")
}

fn ring() -> Topology {
    let hosts: Vec<String> = (0..4).map(|i| format!("h{i}")).collect();
    let routers: Vec<String> = (0..4).map(|i| format!("r{i}")).collect();
    let mut links: Vec<Link> = (0..4)
        .map(|i| Link::new(routers[i].as_str(), routers[(i + 1) % 4].as_str()))
        .collect();
    links.extend((0..4).map(|i| Link::new(hosts[i].as_str(), routers[i].as_str())));
    Topology::new("ring", hosts, routers, links).expect("preset wiring is valid")
}

pub fn build_random(params: &RandomTopologyParams, seed: u64) -> Result<Topology> {
    if params.hosts < 2 || params.routers < 1 {
        return Err(Error::invalid("random topology needs >= 2 hosts and >= 1 router"));
    }
    if !(0.0..=1.0).contains(&params.edge_probability) {
        return Err(Error::invalid("edge_probability must lie in [0, 1]"));
    }
    let width = params.hosts.max(params.routers).to_string().len().max(2);
    let hosts: Vec<String> = (0..params.hosts).map(|i| format!("h{i:0width$}")).collect();
    let routers: Vec<String> = (0..params.routers).map(|i| format!("r{i:0width$}")).collect();

    let mut rng = rng_from(seed);
    for _ in 0..params.max_attempts.max(1) {
        let mut links = Vec::new();
        for i in 0..params.routers {
            for j in i + 1..params.routers {
                if rng.gen::<f64>() < params.edge_probability {
                    links.push(Link::new(routers[i].as_str(), routers[j].as_str()));
                }
            }
        }
        for h in &hosts {
            let r = rng.gen_range(0..params.routers);
            links.push(Link::new(h.as_str(), routers[r].as_str()));
        }
        match Topology::new("random", hosts.clone(), routers.clone(), links) {
            Ok(t) => return Ok(t),
            Err(Error::Disconnected(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Disconnected(format!(
        "random generator produced no connected graph in {} attempts",
        params.max_attempts
    )))
}
