//! Road-network representation and the built-in test topologies.
//!
//! A [`Network`] is a directed graph with per-link congestion attributes and a
//! list of origin–destination (OD) pairs with travel demand. Networks are
//! immutable after construction and safe to share read-only across concurrent
//! solver runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One directed link with its congestion attributes.
///
/// `u0` is the free-flow travel time (also the intercept `a` of the affine
/// cost kind), `v0` the physical capacity used by BPR-type costs, and `b` the
/// optional affine slope. `bpr_b`/`bpr_power` carry shape coefficients read
/// from TNTP files; the cost models use the canonical (0.15, 4) BPR shape and
/// keep these only as provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub tail: usize,
    pub head: usize,
    pub u0: f64,
    pub v0: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpr_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpr_power: Option<f64>,
}

/// An origin–destination pair with nonnegative demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdPair {
    pub o: usize,
    pub d: usize,
    pub demand: f64,
}

/// A directed road network with OD demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Number of nodes; links reference nodes `0..nodes`.
    pub nodes: usize,
    pub links: Vec<Link>,
    pub od: Vec<OdPair>,
}

impl Network {
    /// Validate structural invariants: endpoints within range, finite
    /// attributes, nonnegative demand.
    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.links.iter().enumerate() {
            if l.tail >= self.nodes || l.head >= self.nodes {
                return Err(Error::InvalidModel(format!(
                    "link {i} references node outside 0..{}",
                    self.nodes
                )));
            }
            if !(l.u0.is_finite() && l.v0.is_finite() && l.b.is_finite()) {
                return Err(Error::InvalidModel(format!("link {i} has non-finite attributes")));
            }
        }
        for (w, od) in self.od.iter().enumerate() {
            if od.o >= self.nodes || od.d >= self.nodes {
                return Err(Error::InvalidModel(format!(
                    "OD pair {w} references node outside 0..{}",
                    self.nodes
                )));
            }
            if !od.demand.is_finite() || od.demand < 0.0 {
                return Err(Error::InvalidModel(format!("OD pair {w} has invalid demand")));
            }
        }
        Ok(())
    }

    /// Demand vector in OD order.
    pub fn demand(&self) -> Vec<f64> {
        self.od.iter().map(|od| od.demand).collect()
    }

    /// Total demand over all OD pairs.
    pub fn total_demand(&self) -> f64 {
        self.od.iter().map(|od| od.demand).sum()
    }

    /// Serialize to the network JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Parse the network JSON document and validate it.
    pub fn from_json(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        net.validate()?;
        Ok(net)
    }
}

/// `n` parallel links between a single OD pair; every link is one route.
///
/// Attributes keep the demand-to-capacity ratio constant in `n`: each link
/// gets capacity `v0 = 2·(total_demand/n)` (so a uniform split loads links to
/// half capacity), free-flow time `u0 = 1 + 0.2·(i+1)/n` (a mild deterministic
/// spread so routes are not interchangeable), and affine slope `b = n /
/// max(total_demand, 1)` (so affine congestion stays O(1) at the uniform
/// split).
pub fn build_parallel(n: usize, total_demand: f64) -> Result<Network> {
    if n == 0 {
        return Err(Error::InvalidModel("parallel network needs n >= 1 links".into()));
    }
    let per_link = total_demand / n as f64;
    let links = (0..n)
        .map(|i| Link {
            tail: 0,
            head: 1,
            u0: 1.0 + 0.2 * (i + 1) as f64 / n as f64,
            v0: (2.0 * per_link).max(1e-9),
            b: n as f64 / total_demand.max(1.0),
            bpr_b: None,
            bpr_power: None,
        })
        .collect();
    Ok(Network {
        nodes: 2,
        links,
        od: vec![OdPair {
            o: 0,
            d: 1,
            demand: total_demand,
        }],
    })
}

/// A `rows × cols` lattice with bidirectional links between neighbors and two
/// corner-to-corner OD pairs (northwest→southeast and northeast→southwest).
///
/// Demand per OD is `rows + cols` and every link gets `u0 = 1` and capacity
/// `v0 = (rows + cols)/2`, which keeps the overall congestion level roughly
/// constant as the lattice grows (shortest paths use `rows + cols − 2` links,
/// and demand spreads over O(min(rows, cols)) parallel corridors).
pub fn build_grid(rows: usize, cols: usize) -> Result<Network> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidModel("grid needs rows >= 2 and cols >= 2".into()));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let demand = (rows + cols) as f64;
    let mut links = Vec::new();
    let mut push = |a: usize, b: usize| {
        links.push(Link {
            tail: a,
            head: b,
            u0: 1.0,
            v0: demand / 2.0,
            b: 1.0,
            bpr_b: None,
            bpr_power: None,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push(id(r, c), id(r, c + 1));
                push(id(r, c + 1), id(r, c));
            }
            if r + 1 < rows {
                push(id(r, c), id(r + 1, c));
                push(id(r + 1, c), id(r, c));
            }
        }
    }
    Ok(Network {
        nodes: rows * cols,
        links,
        od: vec![
            OdPair {
                o: id(0, 0),
                d: id(rows - 1, cols - 1),
                demand,
            },
            OdPair {
                o: id(0, cols - 1),
                d: id(rows - 1, 0),
                demand,
            },
        ],
    })
}

/// Which variant of the four-node diamond network to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BraessVariant {
    /// All five links, including the bridge (link index 3).
    WithBridge,
    /// The four-link diamond without the bridge.
    WithoutBridge,
}

/// The classic Braess diamond: nodes 0 (origin), 1, 2, 3 (destination);
/// links 0: 0→1, 1: 0→2, 2: 1→3, 3: 1→2 (the bridge), 4: 2→3; demand 6.
///
/// Affine costs use the textbook coefficients `u = a + b·x` with
/// `a = (0, 50, 50, 10, 0)` and `b = (10, 1, 1, 1, 10)`: the per-traveler
/// equilibrium cost is 83 without the bridge and 92 with it — adding the
/// bridge hurts everyone. The three routes are {0,2}, {0,3,4}, and {1,4}
/// (1-based: {1,3}, {1,4,5}, {2,5}).
pub fn build_braess(variant: BraessVariant) -> Network {
    let attrs = [
        (0usize, 1usize, 0.0, 10.0),
        (0, 2, 50.0, 1.0),
        (1, 3, 50.0, 1.0),
        (1, 2, 10.0, 1.0),
        (2, 3, 0.0, 10.0),
    ];
    let links = attrs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 3 || variant == BraessVariant::WithBridge)
        .map(|(_, &(tail, head, a, b))| Link {
            tail,
            head,
            u0: a,
            v0: 1.0,
            b,
            bpr_b: None,
            bpr_power: None,
        })
        .collect();
    Network {
        nodes: 4,
        links,
        od: vec![OdPair {
            o: 0,
            d: 3,
            demand: 6.0,
        }],
    }
}

/// A three-node, four-link network whose path-flow equilibrium is not unique:
/// two identical links 0→1 and two identical links 1→2 give four routes whose
/// incidence matrix has a one-dimensional kernel, so infinitely many path
/// flows produce the same (unique) equilibrium link flows.
///
/// Costs are affine `u = 1 + x` on all links with demand 4; the equilibrium
/// link flows are (2, 2, 2, 2) and every route costs 6.
pub fn build_three_node_four_link() -> Network {
    let mk = |tail, head| Link {
        tail,
        head,
        u0: 1.0,
        v0: 1.0,
        b: 1.0,
        bpr_b: None,
        bpr_power: None,
    };
    Network {
        nodes: 3,
        links: vec![mk(0, 1), mk(0, 1), mk(1, 2), mk(1, 2)],
        od: vec![OdPair {
            o: 0,
            d: 2,
            demand: 4.0,
        }],
    }
}

/// Two parallel links with affine costs `u1 = 1 + x1`, `u2 = 2 + x2` and
/// demand 3: the equilibrium split is p = (2/3, 1/3) with both route costs 3,
/// and the system optimum splits flows (1.75, 1.25).
pub fn build_two_link() -> Network {
    Network {
        nodes: 2,
        links: vec![
            Link {
                tail: 0,
                head: 1,
                u0: 1.0,
                v0: 1.0,
                b: 1.0,
                bpr_b: None,
                bpr_power: None,
            },
            Link {
                tail: 0,
                head: 1,
                u0: 2.0,
                v0: 1.0,
                b: 1.0,
                bpr_b: None,
                bpr_power: None,
            },
        ],
        od: vec![OdPair {
            o: 0,
            d: 1,
            demand: 3.0,
        }],
    }
}
