//! Kirchhoff's equations on a conductivity-weighted digraph.
//!
//! The weighted Laplacian `L(σ) = B diag(σ/ℓ) Bᵀ` only depends on the
//! undirected conductances, so opposite arcs `ij`, `ji` simply add up.
//! Systems are solved by Gaussian elimination in the form that keeps every
//! Schur complement a Laplacian: pivots are recomputed as the sum of the
//! remaining off-diagonal weights instead of by subtraction. That keeps the
//! solve entrywise accurate when conductivities span many orders of
//! magnitude, which is the normal state of the dynamics near convergence.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ArcSet, ArcVector, Digraph, SourceVector};
use crate::scalar::{norm_inf, Scalar};

/// Potential, field and current for one conductivity vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectricalSolution<T> {
    /// Node potentials `p`.
    pub potential: Vec<T>,
    /// Arc fields `ψ = Ψ(p)`, `ψ_ij = (p_i − p_j)/ℓ_ij`.
    pub field: ArcVector<T>,
    /// Arc currents `φ = σ ψ`.
    pub current: ArcVector<T>,
}

impl<T: Scalar> ElectricalSolution<T> {
    fn from_potential(g: &Digraph<T>, sigma: &ArcVector<T>, potential: Vec<T>) -> Self {
        let field = field_of(g, &potential);
        let current = sigma
            .iter()
            .zip(field.iter())
            .map(|(&s, &f)| s * f)
            .collect();
        Self {
            potential,
            field,
            current,
        }
    }

    pub fn potential_norm(&self) -> T {
        norm_inf(&self.potential)
    }
}

/// Tuning for the linear solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirchhoffOptions<T> {
    /// Arcs with `σ ≤ support_threshold` are left out of the Laplacian.
    pub support_threshold: T,
    /// Backward error `‖b − Lp‖ / (‖b‖ + ‖|L||p|‖)` above which a
    /// refinement sweep is run.
    pub refine_tol: T,
    /// Backward error above which the solve is rejected.
    pub residual_tol: T,
    pub max_refinements: usize,
}

impl<T: Scalar> Default for KirchhoffOptions<T> {
    fn default() -> Self {
        Self {
            support_threshold: T::lit(1e-12),
            refine_tol: T::lit(1e-10).max(T::epsilon() * T::lit(1e3)),
            residual_tol: T::lit(1e-8).max(T::epsilon().sqrt() * T::lit(10.0)),
            max_refinements: 3,
        }
    }
}

/// `Ψ(p)`: `ψ_ij = (p_i − p_j)/ℓ_ij` on every arc.
pub fn field_of<T: Scalar>(g: &Digraph<T>, p: &[T]) -> ArcVector<T> {
    g.arcs()
        .iter()
        .map(|a| (p[a.tail] - p[a.head]) / a.length)
        .collect()
}

/// Neumann problem `L(σ)p = b` with default options.
pub fn solve_neumann<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    b: &SourceVector<T>,
) -> Result<ElectricalSolution<T>> {
    solve_neumann_with(g, sigma, b, &KirchhoffOptions::default())
}

/// Neumann problem `L(σ)p = b`.
///
/// The potential is normalised so that its minimum over every connected
/// component of the support graph `{σ > threshold}` is zero. Every component
/// must be balanced.
pub fn solve_neumann_with<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    b: &SourceVector<T>,
    opts: &KirchhoffOptions<T>,
) -> Result<ElectricalSolution<T>> {
    let n = g.node_count();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: b.len(),
        });
    }
    let support = checked_support(g, sigma, opts.support_threshold)?;
    let label = g.undirected_components(&support);
    let comp_count = label.iter().max().map_or(0, |&m| m + 1);

    let mut net = vec![T::zero(); comp_count];
    let mut ground = vec![usize::MAX; comp_count];
    for v in 0..n {
        net[label[v]] = net[label[v]] + b[v];
        if ground[label[v]] == usize::MAX {
            ground[label[v]] = v;
        }
    }
    let tol = T::exact_tol() * b.norm_one().max(T::one());
    if let Some(c) = (0..comp_count).find(|&c| net[c].abs() > tol) {
        return Err(Error::InconsistentSource {
            node: ground[c],
            net: net[c].as_f64(),
        });
    }

    let b_scale = b.norm_inf();
    if b_scale.is_zero() {
        return Ok(ElectricalSolution::from_potential(
            g,
            sigma,
            vec![T::zero(); n],
        ));
    }

    let lap = Laplacian::assemble(g, sigma, &support);
    let strength = lap.strength();
    for v in 0..n {
        let c = label[v];
        if strength[v] > strength[ground[c]] {
            ground[c] = v;
        }
    }
    let mut fixed = vec![false; n];
    for &v in &ground {
        fixed[v] = true;
    }
    let elim = lap.eliminate(&fixed);

    let mut p = vec![T::zero(); n];
    elim.substitute(b.to_vec(), &mut p);
    let mut residual = lap.residual(&p, b);
    for _ in 0..opts.max_refinements {
        if norm_inf(&residual) / (b_scale + lap.magnitude(&p)) <= opts.refine_tol {
            break;
        }
        let mut delta = vec![T::zero(); n];
        elim.substitute(residual, &mut delta);
        for (pi, di) in p.iter_mut().zip(delta) {
            *pi = *pi + di;
        }
        residual = lap.residual(&p, b);
    }
    let scaled = norm_inf(&residual) / (b_scale + lap.magnitude(&p));
    if !scaled.is_finite() || p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential".into()));
    }
    if scaled > opts.residual_tol {
        return Err(Error::Numerical {
            residual: scaled.as_f64(),
        });
    }

    let mut low = vec![T::infinity(); comp_count];
    for v in 0..n {
        low[label[v]] = low[label[v]].min(p[v]);
    }
    for v in 0..n {
        p[v] = p[v] - low[label[v]];
    }
    Ok(ElectricalSolution::from_potential(g, sigma, p))
}

/// Dirichlet problem: `p = boundary` on the boundary nodes and `(L(σ)p)_i = 0`
/// elsewhere. Every component of the support graph needs a boundary node.
pub fn solve_dirichlet<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    boundary: &BTreeMap<usize, T>,
) -> Result<ElectricalSolution<T>> {
    solve_dirichlet_with(g, sigma, boundary, &KirchhoffOptions::default())
}

pub fn solve_dirichlet_with<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    boundary: &BTreeMap<usize, T>,
    opts: &KirchhoffOptions<T>,
) -> Result<ElectricalSolution<T>> {
    let n = g.node_count();
    if let Some((&v, _)) = boundary.iter().find(|(&v, _)| v >= n) {
        return Err(Error::Domain(format!(
            "boundary node {v} is not in the graph"
        )));
    }
    if let Some((_, x)) = boundary.iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite boundary value {x}")));
    }
    let support = checked_support(g, sigma, opts.support_threshold)?;
    let label = g.undirected_components(&support);
    let comp_count = label.iter().max().map_or(0, |&m| m + 1);
    let mut anchored = vec![false; comp_count];
    for &v in boundary.keys() {
        anchored[label[v]] = true;
    }
    if let Some(v) = (0..n).find(|&v| !anchored[label[v]]) {
        return Err(Error::Underdetermined { node: v });
    }

    let lap = Laplacian::assemble(g, sigma, &support);
    let mut fixed = vec![false; n];
    let mut p = vec![T::zero(); n];
    for (&v, &x) in boundary {
        fixed[v] = true;
        p[v] = x;
    }
    let elim = lap.eliminate(&fixed);
    elim.substitute(vec![T::zero(); n], &mut p);

    let scale = boundary
        .values()
        .fold(T::zero(), |m, x| m.max(x.abs()))
        .max(T::min_positive_value());
    let zero = SourceVector::zeros(n);
    let interior_residual = |p: &[T]| -> Vec<T> {
        let mut r = lap.residual(p, &zero);
        for (ri, &f) in r.iter_mut().zip(fixed.iter()) {
            if f {
                *ri = T::zero();
            }
        }
        r
    };
    let mut residual = interior_residual(&p);
    for _ in 0..opts.max_refinements {
        if norm_inf(&residual) / scale <= opts.refine_tol {
            break;
        }
        let mut delta = vec![T::zero(); n];
        elim.substitute(residual, &mut delta);
        for (pi, di) in p.iter_mut().zip(delta) {
            *pi = *pi + di;
        }
        residual = interior_residual(&p);
    }
    let scaled = norm_inf(&residual) / scale;
    if scaled > opts.residual_tol {
        return Err(Error::Numerical {
            residual: scaled.as_f64(),
        });
    }
    Ok(ElectricalSolution::from_potential(g, sigma, p))
}

fn checked_support<T: Scalar>(
    g: &Digraph<T>,
    sigma: &ArcVector<T>,
    threshold: T,
) -> Result<ArcSet> {
    sigma.check_len(g.arc_count())?;
    if let Some(e) = sigma
        .iter()
        .position(|s| !(*s >= T::zero()) || !s.is_finite())
    {
        return Err(Error::Domain(format!(
            "conductivity of arc {e} is {} (must be finite and nonnegative)",
            sigma[e]
        )));
    }
    Ok(sigma.support_above(threshold))
}

/// Dense symmetric conductance matrix with a sparsity pattern.
struct Laplacian<T> {
    n: usize,
    weight: Vec<T>,
    neighbours: Vec<Vec<usize>>,
    // (tail, head, conductance) for residual evaluation
    edges: Vec<(usize, usize, T)>,
}

struct Pivot<T> {
    node: usize,
    diag: T,
    links: Vec<(usize, T)>,
}

/// Recorded elimination of all non-fixed nodes.
struct Elimination<T> {
    pivots: Vec<Pivot<T>>,
}

impl<T: Scalar> Laplacian<T> {
    fn assemble(g: &Digraph<T>, sigma: &ArcVector<T>, support: &ArcSet) -> Self {
        let n = g.node_count();
        let mut weight = vec![T::zero(); n * n];
        let mut neighbours = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(support.len());
        for &e in support {
            let a = g.arc(e);
            let c = sigma[e] / a.length;
            let (i, j) = (a.tail, a.head);
            if weight[i * n + j].is_zero() {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
            weight[i * n + j] = weight[i * n + j] + c;
            weight[j * n + i] = weight[j * n + i] + c;
            edges.push((i, j, c));
        }
        Self {
            n,
            weight,
            neighbours,
            edges,
        }
    }

    /// `b − L p`.
    /// Total conductance at each node.
    fn strength(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.neighbours[i]
                    .iter()
                    .map(|&j| self.weight[i * self.n + j])
                    .sum()
            })
            .collect()
    }

    /// `‖ |L| |p| ‖_∞`, the scale of the rounding error in `L p`.
    fn magnitude(&self, p: &[T]) -> T {
        let mut acc = vec![T::zero(); self.n];
        for &(i, j, c) in &self.edges {
            let f = c * (p[i].abs() + p[j].abs());
            acc[i] = acc[i] + f;
            acc[j] = acc[j] + f;
        }
        norm_inf(&acc)
    }

    fn residual(&self, p: &[T], b: &[T]) -> Vec<T> {
        let mut r = b.to_vec();
        for &(i, j, c) in &self.edges {
            let f = c * (p[i] - p[j]);
            r[i] = r[i] - f;
            r[j] = r[j] + f;
        }
        r
    }

    /// Eliminates every node not marked `fixed`, minimum degree first.
    fn eliminate(&self, fixed: &[bool]) -> Elimination<T> {
        let n = self.n;
        let mut w = self.weight.clone();
        let mut adj = self.neighbours.clone();
        let mut linked: Vec<bool> = w.iter().map(|x| !x.is_zero()).collect();
        let mut gone = vec![false; n];
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut pivots = Vec::with_capacity(n);

        for _ in 0..fixed.iter().filter(|f| !**f).count() {
            let k = (0..n)
                .filter(|&v| !gone[v] && !fixed[v])
                .min_by_key(|&v| degree[v])
                .expect("a node remains to eliminate");
            gone[k] = true;
            let links: Vec<(usize, T)> = adj[k]
                .iter()
                .filter(|&&j| !gone[j])
                .map(|&j| (j, w[k * n + j]))
                .filter(|(_, x)| !x.is_zero())
                .collect();
            let diag: T = links.iter().map(|&(_, x)| x).sum();
            for &(i, _) in &links {
                degree[i] -= 1;
            }
            if !diag.is_zero() {
                for (a, &(i, wi)) in links.iter().enumerate() {
                    for &(j, wj) in &links[a + 1..] {
                        let fill = wi * (wj / diag);
                        if fill.is_zero() {
                            continue;
                        }
                        w[i * n + j] = w[i * n + j] + fill;
                        w[j * n + i] = w[j * n + i] + fill;
                        if !linked[i * n + j] {
                            linked[i * n + j] = true;
                            linked[j * n + i] = true;
                            adj[i].push(j);
                            adj[j].push(i);
                            degree[i] += 1;
                            degree[j] += 1;
                        }
                    }
                }
            }
            pivots.push(Pivot {
                node: k,
                diag,
                links,
            });
        }
        Elimination { pivots }
    }
}

impl<T: Scalar> Elimination<T> {
    /// Solves for the eliminated nodes given `rhs` and the values already in
    /// `p` at fixed nodes.
    fn substitute(&self, mut rhs: Vec<T>, p: &mut [T]) {
        for piv in &self.pivots {
            if piv.diag.is_zero() {
                continue;
            }
            let carry = rhs[piv.node] / piv.diag;
            for &(j, w) in &piv.links {
                rhs[j] = rhs[j] + w * carry;
            }
        }
        for piv in self.pivots.iter().rev() {
            p[piv.node] = if piv.diag.is_zero() {
                T::zero()
            } else {
                let pulled: T = piv.links.iter().map(|&(j, w)| w * p[j]).sum();
                (rhs[piv.node] + pulled) / piv.diag
            };
        }
    }
}
