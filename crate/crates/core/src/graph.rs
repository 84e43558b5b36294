//! Weighted digraphs, source vectors, cuts and cycles.
//!
//! Everything downstream (the electrical solver, the dynamics, the exact
//! oracle) works on a [`Digraph`] whose arc indices are fixed at
//! construction. Arc order is the input order and is the only order used for
//! tie-breaking anywhere in the crate.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::ops::{Deref, DerefMut};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{norm_inf, norm_one, Scalar};

/// Set of arc indices, ordered by index.
pub type ArcSet = BTreeSet<usize>;
/// Set of node ids.
pub type NodeSet = BTreeSet<usize>;

/// Default cap on the number of subsets enumerated by [`cut_bounds`].
pub const CUT_ENUMERATION_CAP: usize = 20;

/// A directed arc `tail -> head` with positive length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc<T> {
    pub tail: usize,
    pub head: usize,
    pub length: T,
}

/// Immutable weighted digraph `G = (V, E, ℓ)`.
///
/// Opposite arcs `i -> j`, `j -> i` may coexist; parallel arcs in the same
/// direction may not.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph<T> {
    node_count: usize,
    arcs: Vec<Arc<T>>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
}

impl<T: Scalar> Digraph<T> {
    pub fn new(
        node_count: usize,
        arcs: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out_arcs = vec![Vec::new(); node_count];
        let mut in_arcs = vec![Vec::new(); node_count];
        let mut list = Vec::new();
        for (idx, (tail, head, length)) in arcs.into_iter().enumerate() {
            if tail >= node_count || head >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "arc {idx} ({tail} -> {head}) references a node outside 0..{node_count}"
                )));
            }
            if tail == head {
                return Err(Error::InvalidGraph(format!(
                    "arc {idx} is a self-loop at node {tail}"
                )));
            }
            if !(length > T::zero()) || !length.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "arc {idx} ({tail} -> {head}) has non-positive length {length}"
                )));
            }
            if !seen.insert((tail, head)) {
                return Err(Error::DuplicateArc { tail, head });
            }
            out_arcs[tail].push(idx);
            in_arcs[head].push(idx);
            list.push(Arc { tail, head, length });
        }
        Ok(Self {
            node_count,
            arcs: list,
            out_arcs,
            in_arcs,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    #[inline]
    pub fn arcs(&self) -> &[Arc<T>] {
        &self.arcs
    }

    #[inline]
    pub fn arc(&self, idx: usize) -> &Arc<T> {
        &self.arcs[idx]
    }

    /// Arcs leaving `node`, in index order.
    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[node]
    }

    /// Arcs entering `node`, in index order.
    pub fn in_arcs(&self, node: usize) -> &[usize] {
        &self.in_arcs[node]
    }

    pub fn find_arc(&self, tail: usize, head: usize) -> Option<usize> {
        self.out_arcs
            .get(tail)?
            .iter()
            .copied()
            .find(|&e| self.arcs[e].head == head)
    }

    pub fn lengths(&self) -> ArcVector<T> {
        self.arcs.iter().map(|a| a.length).collect()
    }

    pub fn total_length(&self) -> T {
        self.arcs.iter().map(|a| a.length).sum()
    }

    /// `ℓᵀx`.
    pub fn cost(&self, x: &ArcVector<T>) -> T {
        self.arcs
            .iter()
            .zip(x.iter())
            .map(|(a, &v)| a.length * v)
            .sum()
    }

    /// Same graph with every arc reversed; arc indices are preserved.
    pub fn reversed(&self) -> Self {
        Self::new(
            self.node_count,
            self.arcs.iter().map(|a| (a.head, a.tail, a.length)),
        )
        .expect("reversal of a valid digraph is valid")
    }

    /// Nodes touched by the given arcs.
    pub fn nodes_of<'a>(&self, arcs: impl IntoIterator<Item = &'a usize>) -> NodeSet {
        arcs.into_iter()
            .flat_map(|&e| [self.arcs[e].tail, self.arcs[e].head])
            .collect()
    }

    /// Connected components of the underlying undirected graph restricted to
    /// `arcs`. Nodes not touched by any arc form singleton components.
    /// Returns a component label per node; labels are dense and ordered by
    /// smallest member.
    pub fn undirected_components<'a>(
        &self,
        arcs: impl IntoIterator<Item = &'a usize>,
    ) -> Vec<usize> {
        let mut uf = UnionFind::new(self.node_count);
        for &e in arcs {
            uf.union(self.arcs[e].tail, self.arcs[e].head);
        }
        let mut root_label = vec![usize::MAX; self.node_count];
        let mut next = 0;
        (0..self.node_count)
            .map(|v| {
                let r = uf.find(v);
                if root_label[r] == usize::MAX {
                    root_label[r] = next;
                    next += 1;
                }
                root_label[r]
            })
            .collect()
    }

    /// True when the underlying undirected graph of `arcs` is connected
    /// (on the nodes it touches). Empty sets count as disconnected.
    pub fn arcs_connected(&self, arcs: &ArcSet) -> bool {
        let nodes = self.nodes_of(arcs);
        let Some(&first) = nodes.iter().next() else {
            return false;
        };
        let label = self.undirected_components(arcs);
        nodes.iter().all(|&v| label[v] == label[first])
    }
}

/// Node-indexed supply/demand vector `b` with `Σ b = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceVector<T>(Vec<T>);

impl<T: Scalar> SourceVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite source value {bad}")));
        }
        let sum: T = values.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::epsilon() * norm_one(&values));
        if sum.abs() > tol {
            return Err(Error::Unbalanced { sum: sum.as_f64() });
        }
        Ok(Self(values))
    }

    /// Wraps values that are balanced by construction, such as a divergence.
    pub(crate) fn balanced_unchecked(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    /// Unit demand pair: `+amount` at `source`, `-amount` at `sink`.
    pub fn pair(n: usize, source: usize, sink: usize, amount: T) -> Self {
        let mut v = vec![T::zero(); n];
        v[source] = amount;
        v[sink] = -amount;
        Self(v)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| v.is_zero())
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&v| -v).collect())
    }

    /// `Σ b_i⁺`, which equals `max_S |b(S)|`.
    pub fn total_supply(&self) -> T {
        self.0.iter().filter(|v| **v > T::zero()).copied().sum()
    }

    pub fn norm_inf(&self) -> T {
        norm_inf(&self.0)
    }

    pub fn norm_one(&self) -> T {
        norm_one(&self.0)
    }

    /// Nodes with nonzero requirement.
    pub fn support(&self) -> NodeSet {
        (0..self.0.len())
            .filter(|&i| !self.0[i].is_zero())
            .collect()
    }
}

impl<T> Deref for SourceVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Arc-indexed real vector: flows, conductivities, fields, oriented cycles.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ArcVector<T>(Vec<T>);

impl<T: Scalar> ArcVector<T> {
    pub fn zeros(m: usize) -> Self {
        Self(vec![T::zero(); m])
    }

    pub fn filled(m: usize, value: T) -> Self {
        Self(vec![value; m])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// `‖self − other‖_∞`.
    pub fn dist_inf(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn norm_inf(&self) -> T {
        norm_inf(&self.0)
    }

    /// Arcs whose value exceeds `threshold`.
    pub fn support_above(&self, threshold: T) -> ArcSet {
        (0..self.0.len())
            .filter(|&e| self.0[e] > threshold)
            .collect()
    }

    pub(crate) fn check_len(&self, m: usize) -> Result<()> {
        if self.0.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: self.0.len(),
            });
        }
        Ok(())
    }
}

impl<T> From<Vec<T>> for ArcVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

impl<T> FromIterator<T> for ArcVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<T> Deref for ArcVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ArcVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Extreme nonzero cut requirements `max_S |b(S)|` and `min {|b(S)| : b(S) ≠ 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutBounds<T> {
    pub b_star_max: T,
    pub b_star_min: T,
}

/// `Bx`: out-flow minus in-flow at every node.
pub fn divergence<T: Scalar>(g: &Digraph<T>, x: &ArcVector<T>) -> Result<Vec<T>> {
    x.check_len(g.arc_count())?;
    let mut d = vec![T::zero(); g.node_count()];
    for (a, &v) in g.arcs().iter().zip(x.iter()) {
        d[a.tail] = d[a.tail] + v;
        d[a.head] = d[a.head] - v;
    }
    Ok(d)
}

/// Whether `x` satisfies Kirchhoff's current law for `b` within `tol` (∞-norm).
pub fn is_flow<T: Scalar>(
    g: &Digraph<T>,
    x: &ArcVector<T>,
    b: &SourceVector<T>,
    tol: T,
) -> Result<bool> {
    if b.len() != g.node_count() {
        return Err(Error::Dimension {
            expected: g.node_count(),
            found: b.len(),
        });
    }
    let d = divergence(g, x)?;
    Ok(d.iter()
        .zip(b.iter())
        .all(|(&di, &bi)| (di - bi).abs() <= tol))
}

/// Net requirement `b(S)` of a node set.
pub fn cut_value<T: Scalar>(b: &SourceVector<T>, s_set: &NodeSet) -> T {
    s_set.iter().map(|&i| b[i]).sum()
}

/// Exact [`CutBounds`] with the default enumeration cap.
pub fn cut_bounds<T: Scalar>(g: &Digraph<T>, b: &SourceVector<T>) -> Result<CutBounds<T>> {
    cut_bounds_with_cap(g, b, CUT_ENUMERATION_CAP)
}

/// Exact [`CutBounds`] by subset enumeration.
///
/// Nodes with `b_i = 0` never change `b(S)`, so only subsets of `supp b` are
/// enumerated; `cap` bounds `|supp b|`.
pub fn cut_bounds_with_cap<T: Scalar>(
    g: &Digraph<T>,
    b: &SourceVector<T>,
    cap: usize,
) -> Result<CutBounds<T>> {
    if b.len() != g.node_count() {
        return Err(Error::Dimension {
            expected: g.node_count(),
            found: b.len(),
        });
    }
    let support: Vec<T> = b.iter().copied().filter(|v| !v.is_zero()).collect();
    if support.is_empty() {
        return Err(Error::DegenerateSource);
    }
    if support.len() > cap {
        return Err(Error::Capacity {
            what: "source support",
            size: support.len(),
            cap,
        });
    }
    let tol = T::exact_tol() * b.norm_inf().max(T::one());
    let mut max = T::zero();
    let mut min = T::infinity();
    // Gray-code walk: each subset differs from the previous one by one member.
    let mut sum = T::zero();
    let mut mask = 0u64;
    for step in 1u64..(1u64 << support.len()) {
        let bit = step.trailing_zeros() as usize;
        mask ^= 1 << bit;
        if mask & (1 << bit) != 0 {
            sum = sum + support[bit];
        } else {
            sum = sum - support[bit];
        }
        let v = sum.abs();
        max = max.max(v);
        if v > tol {
            min = min.min(v);
        }
    }
    Ok(CutBounds {
        b_star_max: max,
        b_star_min: min,
    })
}

/// Exact feasibility of the uncapacitated transshipment problem.
///
/// Routes `Σ b⁺` from a super-source to a super-sink through unbounded copies
/// of the arcs (Edmonds–Karp); feasible iff all supply gets through.
pub fn is_feasible<T: Scalar>(g: &Digraph<T>, b: &SourceVector<T>) -> bool {
    if b.len() != g.node_count() {
        return false;
    }
    let supply = b.total_supply();
    if supply.is_zero() {
        return true;
    }
    let n = g.node_count();
    let (src, snk) = (n, n + 1);
    let big = supply + supply + T::one();
    let mut net = FlowNetwork::new(n + 2);
    for a in g.arcs() {
        net.add_edge(a.tail, a.head, big);
    }
    for (i, &bi) in b.iter().enumerate() {
        if bi > T::zero() {
            net.add_edge(src, i, bi);
        } else if bi < T::zero() {
            net.add_edge(i, snk, -bi);
        }
    }
    let routed = net.max_flow(src, snk);
    routed >= supply - T::exact_tol() * supply.max(T::one())
}

/// A simple cycle of the underlying undirected graph with an orientation:
/// `+1` on arcs traversed forwards, `-1` on arcs traversed backwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrientedCycle {
    pub arcs: Vec<(usize, i8)>,
}

impl OrientedCycle {
    /// `Σ γ_e ℓ_e`.
    pub fn cost<T: Scalar>(&self, g: &Digraph<T>) -> T {
        self.weighted_sum(&g.lengths())
    }

    /// `Σ γ_e v_e`.
    pub fn weighted_sum<T: Scalar>(&self, values: &[T]) -> T {
        self.arcs
            .iter()
            .map(|&(e, s)| if s > 0 { values[e] } else { -values[e] })
            .sum()
    }

    pub fn to_arc_vector<T: Scalar>(&self, m: usize) -> ArcVector<T> {
        let mut v = ArcVector::zeros(m);
        for &(e, s) in &self.arcs {
            v[e] = T::from_i8(s).expect("sign fits");
        }
        v
    }
}

/// Every simple oriented cycle inside `sub`, each reported once and oriented
/// so that its smallest arc index is traversed forwards.
pub fn oriented_cycles<T: Scalar>(g: &Digraph<T>, sub: &ArcSet) -> Vec<OrientedCycle> {
    let mut incident: Vec<Vec<(usize, usize, i8)>> = vec![Vec::new(); g.node_count()];
    for &e in sub {
        let a = g.arc(e);
        incident[a.tail].push((e, a.head, 1));
        incident[a.head].push((e, a.tail, -1));
    }
    let mut out = Vec::new();
    let mut visited = vec![false; g.node_count()];
    let mut path = Vec::new();
    for &e0 in sub {
        let a = g.arc(e0);
        visited[a.head] = true;
        path.push((e0, 1i8));
        extend_cycle(
            &incident,
            e0,
            a.head,
            a.tail,
            &mut visited,
            &mut path,
            &mut out,
        );
        path.pop();
        visited[a.head] = false;
    }
    out
}

fn extend_cycle(
    incident: &[Vec<(usize, usize, i8)>],
    min_arc: usize,
    at: usize,
    target: usize,
    visited: &mut [bool],
    path: &mut Vec<(usize, i8)>,
    out: &mut Vec<OrientedCycle>,
) {
    for &(e, next, sign) in &incident[at] {
        if e <= min_arc {
            continue;
        }
        if next == target {
            path.push((e, sign));
            out.push(OrientedCycle { arcs: path.clone() });
            path.pop();
        } else if !visited[next] {
            visited[next] = true;
            path.push((e, sign));
            extend_cycle(incident, min_arc, next, target, visited, path, out);
            path.pop();
            visited[next] = false;
        }
    }
}

/// Simple oriented cycles in `sub` whose cost `Σ γ_e ℓ_e` vanishes (|cost| ≤ 1e-9).
pub fn find_directed_cycles_zero_cost<T: Scalar>(
    g: &Digraph<T>,
    sub: &ArcSet,
) -> Vec<OrientedCycle> {
    let tol = T::exact_tol();
    oriented_cycles(g, sub)
        .into_iter()
        .filter(|c| c.cost(g).abs() <= tol)
        .collect()
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

struct FlowNetwork<T> {
    // (to, residual capacity, index of reverse edge)
    edges: Vec<(usize, T, usize)>,
    adj: Vec<Vec<usize>>,
}

impl<T: Scalar> FlowNetwork<T> {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: T) {
        let k = self.edges.len();
        self.edges.push((to, cap, k + 1));
        self.edges.push((from, T::zero(), k));
        self.adj[from].push(k);
        self.adj[to].push(k + 1);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> T {
        let n = self.adj.len();
        let eps = T::epsilon() * T::lit(16.0);
        let mut total = T::zero();
        loop {
            let mut via = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &k in &self.adj[v] {
                    let (to, cap, _) = self.edges[k];
                    if !seen[to] && cap > eps {
                        seen[to] = true;
                        via[to] = k;
                        queue.push_back(to);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut push = T::infinity();
            let mut v = t;
            while v != s {
                let k = via[v];
                push = push.min(self.edges[k].1);
                v = self.edges[self.edges[k].2].0;
            }
            let mut v = t;
            while v != s {
                let k = via[v];
                let rev = self.edges[k].2;
                self.edges[k].1 = self.edges[k].1 - push;
                self.edges[rev].1 = self.edges[rev].1 + push;
                v = self.edges[rev].0;
            }
            total = total + push;
        }
    }
}
