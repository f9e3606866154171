//! Route enumeration: deterministic k-shortest loopless paths per OD pair.
//!
//! Routes are enumerated with Yen's algorithm over free-flow travel times.
//! All orderings are deterministic: ties in cost are broken by comparing the
//! link-index sequences lexicographically, so the same network always yields
//! the same [`PathSet`] with the same path numbering.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::sparse::Incidence;

/// A candidate path ordered by (cost, link sequence).
#[derive(Debug, Clone)]
struct Candidate {
    cost: f64,
    links: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.links.cmp(&other.links))
    }
}

/// Min-heap entry for the best-first search: the full path is carried so that
/// equal-cost pops resolve lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
struct QueueEntry {
    cand: Candidate,
    node: usize,
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reverse: BinaryHeap is a max-heap, we want the smallest first.
        other.cand.cmp(&self.cand)
    }
}

/// Shortest loopless path from `source` to `target` under `weights`, skipping
/// banned links and nodes. Returns the link sequence, or `None` if
/// unreachable. Ties resolve to the lexicographically smallest link sequence.
fn shortest_path(
    net: &Network,
    out_links: &[Vec<usize>],
    weights: &[f64],
    source: usize,
    target: usize,
    banned_links: &[bool],
    banned_nodes: &[bool],
) -> Option<Candidate> {
    let mut settled = vec![false; net.nodes];
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry {
        cand: Candidate {
            cost: 0.0,
            links: Vec::new(),
        },
        node: source,
    });
    while let Some(QueueEntry { cand, node }) = heap.pop() {
        if node == target {
            return Some(cand);
        }
        if settled[node] {
            continue;
        }
        settled[node] = true;
        for &l in &out_links[node] {
            if banned_links[l] {
                continue;
            }
            let head = net.links[l].head;
            if banned_nodes[head] || settled[head] {
                continue;
            }
            let mut links = cand.links.clone();
            links.push(l);
            heap.push(QueueEntry {
                cand: Candidate {
                    cost: cand.cost + weights[l],
                    links,
                },
                node: head,
            });
        }
    }
    None
}

/// Node sequence visited by a link path starting at `source`.
fn node_sequence(net: &Network, source: usize, links: &[usize]) -> Vec<usize> {
    let mut nodes = vec![source];
    for &l in links {
        nodes.push(net.links[l].head);
    }
    nodes
}

/// Up to `k` shortest loopless paths from `source` to `target` under
/// `weights`, ordered by (cost, link sequence). Yen's algorithm.
pub fn k_shortest_paths(
    net: &Network,
    weights: &[f64],
    source: usize,
    target: usize,
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    if weights.len() != net.links.len() {
        return Err(Error::Dimension {
            what: "path weights",
            expected: net.links.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidModel("path weights must be finite and nonnegative".into()));
    }
    let mut out_links = vec![Vec::new(); net.nodes];
    for (l, link) in net.links.iter().enumerate() {
        out_links[link.tail].push(l);
    }
    let no_links = vec![false; net.links.len()];
    let no_nodes = vec![false; net.nodes];

    let mut accepted: Vec<Candidate> = Vec::new();
    let first = match shortest_path(net, &out_links, weights, source, target, &no_links, &no_nodes)
    {
        Some(c) => c,
        None => return Ok(Vec::new()),
    };
    accepted.push(first);

    let mut frontier: BTreeSet<Candidate> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        let prev_nodes = node_sequence(net, source, &prev.links);
        // Deviate at every node of the previous path except the target.
        for i in 0..prev.links.len() {
            let spur_node = prev_nodes[i];
            let root = &prev.links[..i];
            let root_cost: f64 = root.iter().map(|&l| weights[l]).sum();

            let mut banned_links = no_links.clone();
            for cand in &accepted {
                if cand.links.len() > i && cand.links[..i] == *root {
                    banned_links[cand.links[i]] = true;
                }
            }
            let mut banned_nodes = no_nodes.clone();
            for &n in &prev_nodes[..i] {
                banned_nodes[n] = true;
            }

            if let Some(spur) = shortest_path(
                net,
                &out_links,
                weights,
                spur_node,
                target,
                &banned_links,
                &banned_nodes,
            ) {
                let mut links = root.to_vec();
                links.extend_from_slice(&spur.links);
                frontier.insert(Candidate {
                    cost: root_cost + spur.cost,
                    links,
                });
            }
        }
        match frontier.pop_first() {
            Some(best) => accepted.push(best),
            None => break,
        }
    }
    Ok(accepted.into_iter().map(|c| c.links).collect())
}

/// Enumerated routes for every OD pair, with the incidence structure the
/// solvers consume.
///
/// Paths are numbered globally and grouped by OD pair: the routes of OD `w`
/// occupy indices `od_ptr[w]..od_ptr[w+1]`.
#[derive(Debug, Clone)]
pub struct PathSet {
    /// Link-index sequence of each path, in global path order.
    pub paths: Vec<Vec<usize>>,
    /// Group boundaries: paths of OD `w` are `od_ptr[w]..od_ptr[w+1]`.
    pub od_ptr: Vec<usize>,
    /// Link × path incidence Λ.
    pub lambda: Incidence,
    /// OD × path incidence Σ.
    pub sigma: Incidence,
    /// Per-path demand `q = Σᵀ d` (each path carries its OD's demand).
    pub q: Vec<f64>,
    /// Mean number of links per path, `nnz(Λ) / |paths|`.
    pub nbar_link: f64,
}

impl PathSet {
    /// Assemble a path set from explicitly supplied routes, `routes[w]`
    /// holding the link sequences for OD pair `w` in the desired order.
    ///
    /// Validates that each route is a connected, loopless walk from its OD's
    /// origin to its destination. This is the entry point for callers that
    /// already know the routes — imported route choice sets, or synthetic
    /// topologies (a parallel network's routes are just its links) where
    /// running the full enumeration would be wasted work.
    pub fn from_paths(net: &Network, routes: &[Vec<Vec<usize>>]) -> Result<PathSet> {
        net.validate()?;
        if routes.len() != net.od.len() {
            return Err(Error::Dimension {
                what: "routes per OD pair",
                expected: net.od.len(),
                got: routes.len(),
            });
        }
        let mut paths = Vec::new();
        let mut od_ptr = vec![0usize];
        let mut sigma_cols = Vec::new();
        let mut q = Vec::new();
        for (w, od) in net.od.iter().enumerate() {
            if routes[w].is_empty() {
                return Err(Error::Disconnected {
                    origin: od.o,
                    destination: od.d,
                });
            }
            for links in &routes[w] {
                let bad = |msg: &str| {
                    Error::InvalidModel(format!("OD {w} route {links:?}: {msg}"))
                };
                if links.is_empty() {
                    return Err(bad("empty route"));
                }
                if links.iter().any(|&l| l >= net.links.len()) {
                    return Err(bad("link index out of range"));
                }
                let mut at = od.o;
                let mut seen = vec![od.o];
                for &l in links {
                    if net.links[l].tail != at {
                        return Err(bad("links do not chain"));
                    }
                    at = net.links[l].head;
                    seen.push(at);
                }
                if at != od.d {
                    return Err(bad("route does not end at the destination"));
                }
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != links.len() + 1 {
                    return Err(bad("route revisits a node"));
                }
                paths.push(links.clone());
                sigma_cols.push(vec![w]);
                q.push(od.demand);
            }
            od_ptr.push(paths.len());
        }
        let lambda = Incidence::from_columns(net.links.len(), &paths)?;
        let sigma = Incidence::from_columns(net.od.len(), &sigma_cols)?;
        let nbar_link = lambda.nnz() as f64 / paths.len() as f64;
        Ok(PathSet {
            paths,
            od_ptr,
            lambda,
            sigma,
            q,
            nbar_link,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_od(&self) -> usize {
        self.od_ptr.len() - 1
    }

    /// OD index owning global path `k`.
    pub fn od_of_path(&self, k: usize) -> usize {
        match self.od_ptr.binary_search(&k) {
            Ok(w) => w,
            Err(w) => w - 1,
        }
    }
}

/// Enumerate up to `k` shortest free-flow routes per OD pair and assemble the
/// incidence structure. Fails with [`Error::Disconnected`] if any OD pair has
/// no route at all.
pub fn enumerate_paths(net: &Network, k: usize) -> Result<PathSet> {
    if k == 0 {
        return Err(Error::InvalidConfig("path count k must be at least 1".into()));
    }
    net.validate()?;
    let weights: Vec<f64> = net.links.iter().map(|l| l.u0).collect();

    let mut paths = Vec::new();
    let mut od_ptr = vec![0usize];
    let mut sigma_cols = Vec::new();
    let mut q = Vec::new();
    for (w, od) in net.od.iter().enumerate() {
        let routes = k_shortest_paths(net, &weights, od.o, od.d, k)?;
        if routes.is_empty() {
            return Err(Error::Disconnected {
                origin: od.o,
                destination: od.d,
            });
        }
        for links in routes {
            paths.push(links);
            sigma_cols.push(vec![w]);
            q.push(od.demand);
        }
        od_ptr.push(paths.len());
    }
    let lambda = Incidence::from_columns(net.links.len(), &paths)?;
    let sigma = Incidence::from_columns(net.od.len(), &sigma_cols)?;
    let nbar_link = lambda.nnz() as f64 / paths.len() as f64;
    Ok(PathSet {
        paths,
        od_ptr,
        lambda,
        sigma,
        q,
        nbar_link,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_braess, build_grid, build_parallel, build_two_link, BraessVariant};

    #[test]
    fn two_link_routes() {
        let net = build_two_link();
        let ps = enumerate_paths(&net, 4).unwrap();
        assert_eq!(ps.paths, vec![vec![0], vec![1]]);
        assert_eq!(ps.od_ptr, vec![0, 2]);
        assert_eq!(ps.q, vec![3.0, 3.0]);
    }

    #[test]
    fn braess_route_order() {
        // Free-flow costs: {0,3,4} = 10, {0,2} = 50, {1,4} = 50; the tie at 50
        // resolves lexicographically.
        let net = build_braess(BraessVariant::WithBridge);
        let ps = enumerate_paths(&net, 5).unwrap();
        assert_eq!(ps.paths, vec![vec![0, 3, 4], vec![0, 2], vec![1, 4]]);
        assert_eq!(ps.lambda.nnz(), 7);
        let without = build_braess(BraessVariant::WithoutBridge);
        let ps = enumerate_paths(&without, 5).unwrap();
        assert_eq!(ps.paths.len(), 2);
    }

    #[test]
    fn parallel_routes_in_cost_order() {
        let net = build_parallel(6, 12.0).unwrap();
        let ps = enumerate_paths(&net, 6).unwrap();
        let got: Vec<usize> = ps.paths.iter().map(|p| p[0]).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn disconnected_od_is_an_error() {
        let mut net = build_two_link();
        // Reverse the OD pair: both links point 0 → 1, so 1 → 0 has no route.
        net.od[0].o = 1;
        net.od[0].d = 0;
        let err = enumerate_paths(&net, 2).unwrap_err();
        match err {
            Error::Disconnected { origin: 1, destination: 0 } => {}
            other => panic!("expected Disconnected, got {other:?}"),
        }
    }

    /// Exhaustive oracle: depth-first enumeration of every simple path,
    /// sorted by (cost, link sequence).
    fn brute_force(net: &Network, weights: &[f64], source: usize, target: usize) -> Vec<Candidate> {
        let mut out_links = vec![Vec::new(); net.nodes];
        for (l, link) in net.links.iter().enumerate() {
            out_links[link.tail].push(l);
        }
        let mut all = Vec::new();
        let mut on_path = vec![false; net.nodes];
        let mut links = Vec::new();
        fn dfs(
            net: &Network,
            out_links: &[Vec<usize>],
            weights: &[f64],
            node: usize,
            target: usize,
            on_path: &mut [bool],
            links: &mut Vec<usize>,
            all: &mut Vec<Candidate>,
        ) {
            if node == target {
                all.push(Candidate {
                    cost: links.iter().map(|&l| weights[l]).sum(),
                    links: links.clone(),
                });
                return;
            }
            on_path[node] = true;
            for &l in &out_links[node] {
                let head = net.links[l].head;
                if on_path[head] {
                    continue;
                }
                links.push(l);
                dfs(net, out_links, weights, head, target, on_path, links, all);
                links.pop();
            }
            on_path[node] = false;
        }
        dfs(net, &out_links, weights, source, target, &mut on_path, &mut links, &mut all);
        all.sort();
        all
    }

    #[test]
    fn yen_matches_brute_force_on_grid() {
        let net = build_grid(3, 3).unwrap();
        let weights: Vec<f64> = net.links.iter().map(|l| l.u0).collect();
        let (o, d) = (net.od[0].o, net.od[0].d);
        let oracle = brute_force(&net, &weights, o, d);
        let got = k_shortest_paths(&net, &weights, o, d, 20).unwrap();
        assert_eq!(got.len(), 20.min(oracle.len()));
        for (g, want) in got.iter().zip(&oracle) {
            assert_eq!(g, &want.links);
        }
    }

    #[test]
    fn yen_paths_are_loopless() {
        let net = build_grid(3, 4).unwrap();
        let weights: Vec<f64> = net.links.iter().map(|l| l.u0).collect();
        let got = k_shortest_paths(&net, &weights, 0, 11, 30).unwrap();
        for links in &got {
            let nodes = node_sequence(&net, 0, links);
            let mut seen = nodes.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), nodes.len(), "path {links:?} revisits a node");
        }
    }

    #[test]
    fn from_paths_matches_enumeration_and_validates() {
        let net = build_braess(BraessVariant::WithBridge);
        let enumerated = enumerate_paths(&net, 5).unwrap();
        let explicit = PathSet::from_paths(
            &net,
            &[vec![vec![0, 3, 4], vec![0, 2], vec![1, 4]]],
        )
        .unwrap();
        assert_eq!(explicit.paths, enumerated.paths);
        assert_eq!(explicit.od_ptr, enumerated.od_ptr);
        assert_eq!(explicit.q, enumerated.q);
        assert_eq!(explicit.lambda, enumerated.lambda);
        assert_eq!(explicit.sigma, enumerated.sigma);

        // Broken chain, wrong endpoint, and revisited node all rejected.
        assert!(PathSet::from_paths(&net, &[vec![vec![0, 2, 4]]]).is_err());
        assert!(PathSet::from_paths(&net, &[vec![vec![0]]]).is_err());
        assert!(PathSet::from_paths(&net, &[vec![]]).is_err());
    }

    #[test]
    fn od_of_path_respects_groups() {
        let mut net = build_parallel(3, 6.0).unwrap();
        net.od.push(crate::net::OdPair { o: 0, d: 1, demand: 1.0 });
        let ps = enumerate_paths(&net, 2).unwrap();
        assert_eq!(ps.od_ptr, vec![0, 2, 4]);
        assert_eq!(ps.od_of_path(0), 0);
        assert_eq!(ps.od_of_path(1), 0);
        assert_eq!(ps.od_of_path(2), 1);
        assert_eq!(ps.od_of_path(3), 1);
    }
}
