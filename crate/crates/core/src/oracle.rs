//! Exact reference solutions for the uncapacitated transshipment problem.
//!
//! [`solve_exact`] runs successive shortest paths with node potentials and
//! returns an optimal flow together with a dual certificate. The optimal set
//! `Ĥ` (arcs carried by *some* optimal flow) is read off the residual graph
//! of zero reduced cost. [`enumerate_bfs`] is an independent brute-force
//! route used to cross-check both on small instances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ArcSet, ArcVector, Digraph, SourceVector, UnionFind};
use crate::scalar::Scalar;

/// Default cap on the arc count accepted by [`enumerate_bfs`].
pub const BFS_ARC_CAP: usize = 16;

/// Potential defined on a subset of the nodes.
pub type PartialPotential<T> = Vec<Option<T>>;

/// Optimal cost, one optimal flow, a dual certificate and the optimal set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalSet<T> {
    pub optimal_cost: T,
    pub witness_flow: ArcVector<T>,
    /// `Ĥ`: arcs with positive flow in some optimal flow.
    pub optimal_arcs: ArcSet,
    /// `π` with reduced costs `ℓ_ij − π_i + π_j ≥ 0`, zero on `Ĥ`; `min π = 0`.
    pub node_potential: Vec<T>,
}

impl<T: Scalar> OptimalSet<T> {
    /// `ℓ_ij − π_i + π_j` for every arc.
    pub fn reduced_costs(&self, g: &Digraph<T>) -> ArcVector<T> {
        reduced_costs(g, &self.node_potential)
    }
}

/// A basic feasible solution: a positive flow supported on a forest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasicSolution<T> {
    pub flow: ArcVector<T>,
    pub support: ArcSet,
    pub cost: T,
}

/// The canonical dual on `Ĥ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalDual<T> {
    /// `p̂` on `V(Ĥ)`, `None` elsewhere; minimum zero on each component of `Ĥ`.
    pub potential: PartialPotential<T>,
    pub connected: bool,
}

pub fn reduced_costs<T: Scalar>(g: &Digraph<T>, pi: &[T]) -> ArcVector<T> {
    g.arcs()
        .iter()
        .map(|a| a.length - pi[a.tail] + pi[a.head])
        .collect()
}

/// Minimum-cost flow by successive shortest paths.
pub fn solve_exact<T: Scalar>(g: &Digraph<T>, b: &SourceVector<T>) -> Result<OptimalSet<T>> {
    let n = g.node_count();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: b.len(),
        });
    }
    let tol = T::exact_tol() * b.norm_inf().max(T::one());
    let mut excess = b.to_vec();
    let mut flow = ArcVector::zeros(g.arc_count());
    // Lengths are positive, so zero potentials already give nonnegative
    // reduced costs on the initial residual graph.
    let mut h = vec![T::zero(); n];

    while excess.iter().any(|&e| e > tol) {
        let (dist, via) = residual_dijkstra(g, &flow, &h, &excess, tol);
        let sink = (0..n)
            .filter(|&v| excess[v] < -tol && dist[v].is_finite())
            .min_by(|&u, &v| dist[u].partial_cmp(&dist[v]).expect("finite distances"))
            .ok_or(Error::Infeasible)?;
        let cap = dist[sink];

        let mut push = -excess[sink];
        let mut v = sink;
        while let Some((e, forward)) = via[v] {
            let a = g.arc(e);
            if forward {
                v = a.tail;
            } else {
                push = push.min(flow[e]);
                v = a.head;
            }
        }
        let source = v;
        push = push.min(excess[source]);

        let mut v = sink;
        while let Some((e, forward)) = via[v] {
            let a = g.arc(e);
            if forward {
                flow[e] = flow[e] + push;
                v = a.tail;
            } else {
                flow[e] = flow[e] - push;
                if flow[e].abs() <= tol {
                    flow[e] = T::zero();
                }
                v = a.head;
            }
        }
        excess[source] = excess[source] - push;
        excess[sink] = excess[sink] + push;

        for v in 0..n {
            h[v] = h[v] + dist[v].min(cap);
        }
    }

    let low = h.iter().fold(T::infinity(), |m, &x| m.min(-x));
    let node_potential: Vec<T> = h.iter().map(|&x| -x - low).collect();
    let optimal_arcs = compute_optimal_set(g, &flow, &node_potential);
    Ok(OptimalSet {
        optimal_cost: g.cost(&flow),
        witness_flow: flow,
        optimal_arcs,
        node_potential,
    })
}

/// Dijkstra on reduced costs over the residual graph, started from every
/// node with positive excess. Returns distances and the arc used to reach
/// each node (`true` when traversed forwards).
#[allow(clippy::type_complexity)]
fn residual_dijkstra<T: Scalar>(
    g: &Digraph<T>,
    flow: &ArcVector<T>,
    h: &[T],
    excess: &[T],
    tol: T,
) -> (Vec<T>, Vec<Option<(usize, bool)>>) {
    let n = g.node_count();
    let mut dist = vec![T::infinity(); n];
    let mut via = vec![None; n];
    let mut done = vec![false; n];
    for v in 0..n {
        if excess[v] > tol {
            dist[v] = T::zero();
        }
    }
    while let Some(u) = (0..n)
        .filter(|&v| !done[v] && dist[v].is_finite())
        .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).expect("finite distances"))
    {
        done[u] = true;
        let mut relax = |v: usize, cost: T, step: (usize, bool)| {
            let cand = dist[u] + cost.max(T::zero());
            if !done[v] && cand < dist[v] {
                dist[v] = cand;
                via[v] = Some(step);
            }
        };
        for &e in g.out_arcs(u) {
            let a = g.arc(e);
            relax(a.head, a.length + h[u] - h[a.head], (e, true));
        }
        for &e in g.in_arcs(u) {
            if flow[e] > tol {
                let a = g.arc(e);
                relax(a.tail, -a.length + h[u] - h[a.tail], (e, false));
            }
        }
    }
    (dist, via)
}

/// Arcs carried by some optimal flow, given one optimal flow and an optimal
/// dual certificate `π`.
///
/// An arc is in `Ĥ` when the witness uses it, or when it has zero reduced
/// cost and closes a cycle in the zero-reduced-cost residual graph.
pub fn compute_optimal_set<T: Scalar>(g: &Digraph<T>, flow: &ArcVector<T>, pi: &[T]) -> ArcSet {
    let n = g.node_count();
    let rc = reduced_costs(g, pi);
    let scale = g.arcs().iter().fold(T::one(), |m, a| m.max(a.length));
    let tol = T::exact_tol() * scale;
    let flow_tol = T::exact_tol() * flow.norm_inf().max(T::one());
    let mut adj = vec![Vec::new(); n];
    for (e, a) in g.arcs().iter().enumerate() {
        if rc[e].abs() <= tol {
            adj[a.tail].push(a.head);
            if flow[e] > flow_tol {
                adj[a.head].push(a.tail);
            }
        }
    }
    let comp = strongly_connected(&adj);
    g.arcs()
        .iter()
        .enumerate()
        .filter(|&(e, a)| {
            flow[e] > flow_tol || (rc[e].abs() <= tol && comp[a.tail] == comp[a.head])
        })
        .map(|(e, _)| e)
        .collect()
}

/// Tarjan's strongly connected components; returns a component id per node.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, position in its adjacency list)
        let mut work = vec![(root, 0usize)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&(v, pos)) = work.last() {
            if pos < adj[v].len() {
                work.last_mut().expect("non-empty").1 += 1;
                let w = adj[v][pos];
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// All basic feasible solutions, by enumerating forests of the arc set.
pub fn enumerate_bfs<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
) -> Result<Vec<BasicSolution<T>>> {
    enumerate_bfs_with_cap(g, b, BFS_ARC_CAP)
}

pub fn enumerate_bfs_with_cap<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    cap: usize,
) -> Result<Vec<BasicSolution<T>>> {
    let m = g.arc_count();
    if m > cap || m >= 64 {
        return Err(Error::Capacity {
            what: "arc count",
            size: m,
            cap,
        });
    }
    if b.len() != g.node_count() {
        return Err(Error::Dimension {
            expected: g.node_count(),
            found: b.len(),
        });
    }
    let tol = T::exact_tol() * b.norm_inf().max(T::one());
    let mut out = Vec::new();
    'subsets: for mask in 0u64..(1u64 << m) {
        let mut uf = UnionFind::new(g.node_count());
        for e in 0..m {
            if mask & (1 << e) != 0 {
                let a = g.arc(e);
                if !uf.union(a.tail, a.head) {
                    continue 'subsets;
                }
            }
        }
        let support: ArcSet = (0..m).filter(|e| mask & (1 << e) != 0).collect();
        if let Some(flow) = forest_flow(g, b, &support, tol) {
            out.push(BasicSolution {
                cost: g.cost(&flow),
                flow,
                support,
            });
        }
    }
    Ok(out)
}

/// The unique flow for `b` supported on the forest, if it is strictly
/// positive on every forest arc.
fn forest_flow<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    forest: &ArcSet,
    tol: T,
) -> Option<ArcVector<T>> {
    let n = g.node_count();
    let mut rest = b.to_vec();
    let mut incident = vec![Vec::new(); n];
    for &e in forest {
        incident[g.arc(e).tail].push(e);
        incident[g.arc(e).head].push(e);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut used = vec![false; g.arc_count()];
    let mut flow = ArcVector::zeros(g.arc_count());
    let mut leaves: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    while let Some(v) = leaves.pop() {
        if degree[v] != 1 {
            continue;
        }
        let e = *incident[v].iter().find(|&&e| !used[e])?;
        used[e] = true;
        let a = g.arc(e);
        let other = if a.tail == v { a.head } else { a.tail };
        flow[e] = if a.tail == v { rest[v] } else { -rest[v] };
        if flow[e] <= tol {
            return None;
        }
        rest[other] = rest[other] + rest[v];
        rest[v] = T::zero();
        degree[v] = 0;
        degree[other] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    rest.iter().all(|r| r.abs() <= tol).then_some(flow)
}

/// Potential `p̂` on `V(Ĥ)` with `ψ = 1` on every arc of `Ĥ`.
pub fn dual_on_optimal_set<T: Scalar>(
    g: &Digraph<T>,
    optimal: &OptimalSet<T>,
) -> Result<OptimalDual<T>> {
    unit_slope_potential(g, &optimal.optimal_arcs)
}

/// Potential on the nodes of `arcs` with `p_i − p_j = ℓ_ij` on every arc,
/// shifted to minimum zero on each connected component.
pub fn unit_slope_potential<T: Scalar>(g: &Digraph<T>, arcs: &ArcSet) -> Result<OptimalDual<T>> {
    if arcs.is_empty() {
        return Err(Error::Domain("optimal set is empty".into()));
    }
    let n = g.node_count();
    let mut incident = vec![Vec::new(); n];
    for &e in arcs {
        incident[g.arc(e).tail].push(e);
        incident[g.arc(e).head].push(e);
    }
    let scale = arcs
        .iter()
        .map(|&e| g.arc(e).length)
        .sum::<T>()
        .max(T::one());
    let tol = T::exact_tol() * scale;
    let mut p: PartialPotential<T> = vec![None; n];
    let mut components = Vec::new();
    for root in g.nodes_of(arcs) {
        if p[root].is_some() {
            continue;
        }
        p[root] = Some(T::zero());
        let mut members = vec![root];
        let mut queue = vec![root];
        while let Some(v) = queue.pop() {
            let pv = p[v].expect("visited");
            for &e in &incident[v] {
                let a = g.arc(e);
                let (other, expected) = if a.tail == v {
                    (a.head, pv - a.length)
                } else {
                    (a.tail, pv + a.length)
                };
                match p[other] {
                    None => {
                        p[other] = Some(expected);
                        members.push(other);
                        queue.push(other);
                    }
                    Some(seen) if (seen - expected).abs() > tol => {
                        return Err(Error::Internal(format!(
                            "optimal set contains an oriented cycle of nonzero cost through arc {e}"
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        components.push(members);
    }
    for members in &components {
        let low = members
            .iter()
            .map(|&v| p[v].expect("visited"))
            .fold(T::infinity(), T::min);
        for &v in members {
            p[v] = p[v].map(|x| x - low);
        }
    }
    Ok(OptimalDual {
        potential: p,
        connected: components.len() == 1,
    })
}
