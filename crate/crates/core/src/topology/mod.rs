//! Network graph under study: end hosts, routers, links and the localizable
//! components derived from them.
//!
//! A component is either an end host or a router interface. Every router
//! endpoint of a link owns exactly one interface; host endpoints own none
//! (a host's NIC is folded into the host component). Interfaces are never
//! serialized, they are re-derived from the link list on load.

mod presets;
mod routing;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use presets::{build_preset, build_random, RandomTopologyParams, PRESET_NAMES};
pub use routing::{compute_routes, PathIndex, RoutingTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
}

impl Link {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        Link {
            a: a.into(),
            b: b.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    Host,
    RouterInterface,
}

/// Position of a component in the global component ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId {
    pub kind: ComponentKind,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: ComponentId,
    /// Host id, or `router[peer]` for an interface.
    pub label: String,
    /// Owning node (the host itself, or the router carrying the interface).
    pub node: usize,
    /// Link the interface sits on; `None` for hosts.
    pub link: Option<usize>,
}

/// Serialized form: `{name, hosts, routers, links: [{a, b}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TopologyDoc {
    name: String,
    hosts: Vec<String>,
    routers: Vec<String>,
    links: Vec<Link>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct Topology {
    name: String,
    hosts: Vec<String>,
    routers: Vec<String>,
    links: Vec<Link>,
    // Derived. Node indices put hosts first, then routers, in input order.
    nodes: Vec<String>,
    node_index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
    components: Vec<Component>,
    interface_of: HashMap<(usize, usize), usize>,
    host_component: Vec<usize>,
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = Error;

    fn try_from(doc: TopologyDoc) -> Result<Self> {
        Topology::new(doc.name, doc.hosts, doc.routers, doc.links)
    }
}

impl From<Topology> for TopologyDoc {
    fn from(t: Topology) -> Self {
        TopologyDoc {
            name: t.name,
            hosts: t.hosts,
            routers: t.routers,
            links: t.links,
        }
    }
}

impl Topology {
    pub fn new(
        name: impl Into<String>,
        hosts: Vec<String>,
        routers: Vec<String>,
        links: Vec<Link>,
    ) -> Result<Self> {
        let name = name.into();
        if hosts.len() < 2 {
            return Err(Error::InvalidTopology("at least two hosts are required".into()));
        }

        let nodes: Vec<String> = hosts.iter().chain(routers.iter()).cloned().collect();
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, id) in nodes.iter().enumerate() {
            if id.is_empty() || id.contains(['>', ',', '[', ']', '"']) || id.trim() != id {
                return Err(Error::InvalidTopology(format!("illegal node id `{id}`")));
            }
            if node_index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidTopology(format!("duplicate node id `{id}`")));
            }
        }
        let n_hosts = hosts.len();

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::new();
        for (li, link) in links.iter().enumerate() {
            let lookup = |id: &str| {
                node_index.get(id).copied().ok_or_else(|| {
                    Error::InvalidTopology(format!("link {li} names unknown node `{id}`"))
                })
            };
            let (a, b) = (lookup(&link.a)?, lookup(&link.b)?);
            if a == b {
                return Err(Error::InvalidTopology(format!("link {li} is a self-loop")));
            }
            if a < n_hosts && b < n_hosts {
                return Err(Error::InvalidTopology(format!(
                    "link {li} joins two hosts; hosts attach to routers only"
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidTopology(format!(
                    "duplicate link {}-{}",
                    link.a, link.b
                )));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }

        // Connectivity over the whole graph.
        let mut reached = vec![false; nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !reached[v] {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(Error::Disconnected(format!(
                "node `{}` is unreachable from `{}`",
                nodes[i], nodes[0]
            )));
        }

        // Hosts first (by id), then interfaces by (router id, link index).
        let mut host_order: Vec<usize> = (0..n_hosts).collect();
        host_order.sort_by(|&x, &y| nodes[x].cmp(&nodes[y]));
        let mut iface_order: Vec<(usize, usize, usize)> = Vec::new();
        for (li, link) in links.iter().enumerate() {
            let (a, b) = (node_index[&link.a], node_index[&link.b]);
            if a >= n_hosts {
                iface_order.push((a, li, b));
            }
            if b >= n_hosts {
                iface_order.push((b, li, a));
            }
        }
        iface_order.sort_by(|x, y| nodes[x.0].cmp(&nodes[y.0]).then(x.1.cmp(&y.1)));

        let mut components = Vec::with_capacity(n_hosts + iface_order.len());
        let mut host_component = vec![usize::MAX; n_hosts];
        for (index, &h) in host_order.iter().enumerate() {
            host_component[h] = components.len();
            components.push(Component {
                id: ComponentId {
                    kind: ComponentKind::Host,
                    index,
                },
                label: nodes[h].clone(),
                node: h,
                link: None,
            });
        }
        let mut interface_of = HashMap::with_capacity(iface_order.len());
        for &(router, li, peer) in &iface_order {
            let index = components.len();
            interface_of.insert((router, li), index);
            components.push(Component {
                id: ComponentId {
                    kind: ComponentKind::RouterInterface,
                    index,
                },
                label: format!("{}[{}]", nodes[router], nodes[peer]),
                node: router,
                link: Some(li),
            });
        }

        Ok(Topology {
            name,
            hosts,
            routers,
            links,
            nodes,
            node_index,
            adjacency,
            components,
            interface_of,
            host_component,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hosts(&self) -> &[String] {
        &self.hosts
    }

    pub fn routers(&self) -> &[String] {
        &self.routers
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn interface_count(&self) -> usize {
        self.components.len() - self.hosts.len()
    }

    /// All localizable components in their stable global order.
    pub fn component_list(&self) -> &[Component] {
        &self.components
    }

    pub fn component_labels(&self) -> Vec<String> {
        self.components.iter().map(|c| c.label.clone()).collect()
    }

    pub fn component_index(&self, label: &str) -> Option<usize> {
        self.components.iter().position(|c| c.label == label)
    }

    pub(crate) fn node_id(&self, node: usize) -> &str {
        &self.nodes[node]
    }

    pub(crate) fn node_of(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub(crate) fn is_host(&self, node: usize) -> bool {
        node < self.hosts.len()
    }

    pub(crate) fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub(crate) fn host_component(&self, node: usize) -> usize {
        self.host_component[node]
    }

    pub(crate) fn interface_component(&self, router: usize, link: usize) -> usize {
        self.interface_of[&(router, link)]
    }

    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
