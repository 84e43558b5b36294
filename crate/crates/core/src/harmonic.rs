//! ∞-harmonic extension of the canonical dual beyond the optimal set.
//!
//! Starting from `(Ĥ, p̂)`, the extension repeatedly attaches the directed
//! trajectory of maximum positive slope and interpolates the potential
//! linearly (in path length) along it. The result `(H*, p*)` is the limit the
//! dynamics' potentials are compared against.

use serde::Serialize;

use crate::dynamics::RunResult;
use crate::error::{Error, Result};
use crate::graph::{ArcSet, Digraph, NodeSet, SourceVector};
use crate::kirchhoff::field_of;
use crate::oracle::{dual_on_optimal_set, solve_exact, PartialPotential};
use crate::scalar::Scalar;

/// A directed path whose endpoints lie in the current subgraph and whose
/// internal nodes lie outside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub arcs: Vec<usize>,
    /// Nodes along the path, endpoints included.
    pub nodes: Vec<usize>,
    pub length: T,
    /// `(p_a − p_b) / ℓ(π)`.
    pub slope: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicExtension<T> {
    /// `H* ⊇ Ĥ`.
    pub arcs: ArcSet,
    /// `p*` on `V(H*)`, `None` elsewhere; minimum zero.
    pub potential: PartialPotential<T>,
    /// Distinct slopes `1 = r_0 > r_1 > … > 0`.
    pub slopes: Vec<T>,
    /// `F_r` for each entry of `slopes`, in the same order.
    pub level_sets: Vec<ArcSet>,
    /// Accepted trajectories, in acceptance order.
    pub trajectories: Vec<Trajectory<T>>,
    /// Nodes of `G` not reached by any positive-slope trajectory.
    pub unreached: NodeSet,
}

impl<T: Scalar> HarmonicExtension<T> {
    pub fn nodes(&self) -> NodeSet {
        (0..self.potential.len())
            .filter(|&v| self.potential[v].is_some())
            .collect()
    }

    /// `F_r` for the slope closest to `r`.
    pub fn level_set(&self, r: T) -> Option<&ArcSet> {
        let idx = (0..self.slopes.len()).min_by(|&i, &j| {
            (self.slopes[i] - r)
                .abs()
                .partial_cmp(&(self.slopes[j] - r).abs())
                .expect("finite slopes")
        })?;
        Some(&self.level_sets[idx])
    }
}

/// Outcome of the discrete ∞-harmonic test.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HarmonicCheck {
    pub violators: Vec<usize>,
    /// Nodes lacking an in-arc or an out-arc in the subgraph; not tested.
    pub skipped: Vec<usize>,
}

/// Trajectory to `(h, p)` of maximum positive slope, ties broken by the
/// lexicographically smallest arc-index sequence.
///
/// For fixed endpoints the slope is maximised by the shortest exterior path,
/// so one exterior Dijkstra per start node covers every candidate.
pub fn max_slope_trajectory<T: Scalar>(
    g: &Digraph<T>,
    h: &ArcSet,
    p: &PartialPotential<T>,
) -> Option<Trajectory<T>> {
    let n = g.node_count();
    let inside = g.nodes_of(h);
    let mut in_h = vec![false; n];
    for &v in &inside {
        in_h[v] = true;
    }
    let in_arc_set = |e: usize| h.contains(&e);
    let tol = T::exact_tol() * g.total_length().max(T::one());

    // (a, b, distance, slope) for every reachable ordered pair with positive slope.
    let mut candidates = Vec::new();
    let mut best = T::zero();
    for &a in &inside {
        let dist = exterior_distances(g, a, &in_h, &in_arc_set, false);
        let pa = p[a].expect("potential defined on V(h)");
        for &b in &inside {
            if b == a || !dist[b].is_finite() {
                continue;
            }
            let slope = (pa - p[b].expect("potential defined on V(h)")) / dist[b];
            if slope > T::zero() {
                best = best.max(slope);
                candidates.push((a, b, dist[b], slope));
            }
        }
    }
    let slope_tol = T::exact_tol() * (T::one() + best);
    candidates.retain(|&(_, _, _, s)| s > T::zero() && best - s <= slope_tol);
    if candidates.is_empty() {
        return None;
    }

    let mut to_end: Vec<(usize, Vec<T>)> = Vec::new();
    for &(_, b, _, _) in &candidates {
        if !to_end.iter().any(|(v, _)| *v == b) {
            to_end.push((b, exterior_distances(g, b, &in_h, &in_arc_set, true)));
        }
    }
    let remaining = |b: usize, x: usize| -> T {
        to_end
            .iter()
            .find(|(v, _)| *v == b)
            .expect("reverse distances computed")
            .1[x]
    };
    // Whether arc e (reached after `walked` length) can continue an optimal
    // trajectory of candidate (a, b, d).
    let tight = |e: usize, walked: T, b: usize, d: T| -> bool {
        let head = g.arc(e).head;
        let total = walked + g.arc(e).length;
        if head == b {
            (total - d).abs() <= tol
        } else if !in_h[head] {
            (total + remaining(b, head) - d).abs() <= tol
        } else {
            false
        }
    };

    let mut alive: Vec<(usize, usize, T)> =
        candidates.iter().map(|&(a, b, d, _)| (a, b, d)).collect();
    let first = alive
        .iter()
        .flat_map(|&(a, b, d)| {
            g.out_arcs(a)
                .iter()
                .copied()
                .filter(move |&e| !in_arc_set(e) && tight(e, T::zero(), b, d))
        })
        .min()?;
    let start = g.arc(first).tail;
    alive.retain(|&(a, b, d)| a == start && tight(first, T::zero(), b, d));
    let mut arcs = vec![first];
    let mut nodes = vec![start, g.arc(first).head];
    let mut walked = g.arc(first).length;
    let mut at = g.arc(first).head;
    while !in_h[at] {
        let next = g
            .out_arcs(at)
            .iter()
            .copied()
            .filter(|&e| !nodes.contains(&g.arc(e).head))
            .filter(|&e| alive.iter().any(|&(_, b, d)| tight(e, walked, b, d)))
            .min()?;
        alive.retain(|&(_, b, d)| tight(next, walked, b, d));
        walked = walked + g.arc(next).length;
        at = g.arc(next).head;
        arcs.push(next);
        nodes.push(at);
    }
    let slope = (p[start].expect("defined") - p[at].expect("defined")) / walked;
    Some(Trajectory {
        arcs,
        nodes,
        length: walked,
        slope,
    })
}

/// Shortest path lengths from (or, with `reverse`, to) `root`, where every
/// internal node lies outside `V(h)` and arcs of `h` are not used.
fn exterior_distances<T: Scalar>(
    g: &Digraph<T>,
    root: usize,
    in_h: &[bool],
    in_arc_set: &dyn Fn(usize) -> bool,
    reverse: bool,
) -> Vec<T> {
    let n = g.node_count();
    let mut dist = vec![T::infinity(); n];
    let mut done = vec![false; n];
    dist[root] = T::zero();
    while let Some(u) = (0..n)
        .filter(|&v| !done[v] && dist[v].is_finite())
        .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).expect("finite"))
    {
        done[u] = true;
        if u != root && in_h[u] {
            continue;
        }
        let arcs = if reverse { g.in_arcs(u) } else { g.out_arcs(u) };
        for &e in arcs {
            if in_arc_set(e) {
                continue;
            }
            let a = g.arc(e);
            let next = if reverse { a.tail } else { a.head };
            let cand = dist[u] + a.length;
            if !done[next] && cand < dist[next] {
                dist[next] = cand;
            }
        }
    }
    dist
}

/// Iterated maximum-slope extension of `(Ĥ, p̂)`.
pub fn build_extension<T: Scalar>(
    g: &Digraph<T>,
    h_hat: &ArcSet,
    p_hat: &PartialPotential<T>,
) -> Result<HarmonicExtension<T>> {
    if !g.arcs_connected(h_hat) {
        return Err(Error::DisconnectedOptimalSet);
    }
    let n = g.node_count();
    if p_hat.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: p_hat.len(),
        });
    }
    let base_nodes = g.nodes_of(h_hat);
    if let Some(v) = base_nodes.iter().find(|&&v| p_hat[v].is_none()) {
        return Err(Error::Domain(format!(
            "potential undefined at node {v} of the optimal set"
        )));
    }
    let mut potential: PartialPotential<T> = vec![None; n];
    for &v in &base_nodes {
        potential[v] = p_hat[v];
    }
    let mut arcs = h_hat.clone();
    let mut slopes = vec![T::one()];
    let mut level_sets = vec![h_hat.clone()];
    let mut trajectories: Vec<Trajectory<T>> = Vec::new();
    let tol = T::exact_tol();

    while let Some(traj) = max_slope_trajectory(g, &arcs, &potential) {
        let last = *slopes.last().expect("slopes start at one");
        if traj.slope > last + tol * (T::one() + last) {
            return Err(Error::Internal(format!(
                "trajectory slope {} exceeds the previous slope {}",
                traj.slope, last
            )));
        }
        let top = potential[traj.nodes[0]].expect("trajectory starts inside");
        let mut walked = T::zero();
        for (k, &e) in traj.arcs.iter().enumerate() {
            walked = walked + g.arc(e).length;
            let v = traj.nodes[k + 1];
            if potential[v].is_none() {
                potential[v] = Some(top - traj.slope * walked);
            }
            arcs.insert(e);
        }
        let new_arcs: ArcSet = traj.arcs.iter().copied().collect();
        if (last - traj.slope).abs() <= tol * (T::one() + last) && trajectories.last().is_some() {
            level_sets.last_mut().expect("non-empty").extend(new_arcs);
        } else {
            slopes.push(traj.slope);
            level_sets.push(new_arcs);
        }
        log::trace!(
            "accepted trajectory {:?} with slope {}",
            traj.arcs,
            traj.slope
        );
        trajectories.push(traj);
    }

    let low = potential
        .iter()
        .flatten()
        .fold(T::infinity(), |m, &x| m.min(x));
    for x in potential.iter_mut().flatten() {
        *x = *x - low;
    }
    let unreached = (0..n).filter(|&v| potential[v].is_none()).collect();
    Ok(HarmonicExtension {
        arcs,
        potential,
        slopes,
        level_sets,
        trajectories,
        unreached,
    })
}

/// Oracle, canonical dual and extension in one call.
pub fn extension_for<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
) -> Result<HarmonicExtension<T>> {
    let optimal = solve_exact(g, b)?;
    let dual = dual_on_optimal_set(g, &optimal)?;
    if !dual.connected {
        return Err(Error::DisconnectedOptimalSet);
    }
    build_extension(g, &optimal.optimal_arcs, &dual.potential)
}

/// Nodes of `V(h_star) \ excluded` where the largest in-field differs from the
/// largest out-field (within 1e-9) or the common value is negative. Only arcs
/// of `h_star` are considered.
pub fn check_inf_harmonic<T: Scalar>(
    g: &Digraph<T>,
    h_star: &ArcSet,
    p: &PartialPotential<T>,
    excluded: &NodeSet,
) -> HarmonicCheck {
    let tol = T::exact_tol();
    let field = |e: usize| -> T {
        let a = g.arc(e);
        (p[a.tail].expect("defined on V(H*)") - p[a.head].expect("defined on V(H*)")) / a.length
    };
    let mut check = HarmonicCheck::default();
    for v in g.nodes_of(h_star) {
        if excluded.contains(&v) {
            continue;
        }
        let max_over = |arcs: &[usize]| {
            arcs.iter()
                .filter(|e| h_star.contains(e))
                .map(|&e| field(e))
                .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.max(x))))
        };
        match (max_over(g.in_arcs(v)), max_over(g.out_arcs(v))) {
            (Some(inward), Some(outward)) => {
                if (inward - outward).abs() > tol * (T::one() + outward.abs()) || outward < -tol {
                    check.violators.push(v);
                }
            }
            _ => check.skipped.push(v),
        }
    }
    check
}

/// `‖p(t)|_{V(H*)} − p*‖_∞`, with both potentials shifted to minimum zero
/// on `V(H*)`.
pub fn dual_convergence_gap<T: Scalar>(
    run: &RunResult<T>,
    extension: &HarmonicExtension<T>,
) -> Result<T> {
    let p = &run.solution.potential;
    if p.len() != extension.potential.len() {
        return Err(Error::Domain(format!(
            "extension covers {} nodes, run has {}",
            extension.potential.len(),
            p.len()
        )));
    }
    let nodes = extension.nodes();
    if nodes.is_empty() {
        return Err(Error::Domain("extension has no nodes".into()));
    }
    let low_run = nodes.iter().map(|&v| p[v]).fold(T::infinity(), T::min);
    let low_ext = nodes
        .iter()
        .map(|&v| extension.potential[v].expect("node of H*"))
        .fold(T::infinity(), T::min);
    Ok(nodes.iter().fold(T::zero(), |m, &v| {
        let diff = (p[v] - low_run) - (extension.potential[v].expect("node of H*") - low_ext);
        m.max(diff.abs())
    }))
}

/// `Ψ(p*) ≤ 1 + tol` on every arc of `g` with both ends in `V(H*)`.
pub fn is_dually_feasible<T: Scalar>(g: &Digraph<T>, p: &PartialPotential<T>, tol: T) -> bool {
    g.arcs().iter().all(|a| match (p[a.tail], p[a.head]) {
        (Some(x), Some(y)) => (x - y) / a.length <= T::one() + tol,
        _ => true,
    })
}

/// The field of a partial potential, `None` on arcs leaving its domain.
pub fn partial_field<T: Scalar>(g: &Digraph<T>, p: &PartialPotential<T>) -> Vec<Option<T>> {
    let filled: Vec<T> = p.iter().map(|x| x.unwrap_or_else(T::zero)).collect();
    let psi = field_of(g, &filled);
    g.arcs()
        .iter()
        .enumerate()
        .map(|(e, a)| (p[a.tail].is_some() && p[a.head].is_some()).then_some(psi[e]))
        .collect()
}
