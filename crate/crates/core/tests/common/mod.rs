//! Instance families shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use physarum_core::graph::{Digraph, SourceVector};
use physarum_core::instance::{random_instance, GeneratorSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub seed: u64,
    pub graph: Digraph<f64>,
    pub sources: SourceVector<f64>,
}

/// Random feasible instance with `3 ≤ n ≤ 8`, `m ≤ 14`, lengths in `1..=10`
/// and `‖b‖_∞ ≤ 3`.
pub fn corpus_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let n = rng.gen_range(3..=8usize);
    let m = rng.gen_range(n - 1..=(n * (n - 1)).min(14));
    let spec = GeneratorSpec {
        nodes: n,
        arcs: m,
        max_length: 10,
        max_supply: 3,
    };
    let file = random_instance(seed, spec).expect("generator succeeds");
    Instance {
        seed,
        graph: file.graph,
        sources: file.sources,
    }
}

pub fn corpus(size: u64) -> Vec<Instance> {
    (0..size).map(corpus_instance).collect()
}

/// Connected undirected graph with every edge doubled into two opposite arcs
/// of equal length, and a unit demand between two distinct nodes.
pub fn doubled_shortest_path(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xd0b1e));
    let n = rng.gen_range(4..=9usize);
    let extra = rng.gen_range(0..=n);
    let edges = random_connected_edges(&mut rng, n, n - 1 + extra);
    let arcs = edges
        .iter()
        .flat_map(|&(u, v, len)| [(u, v, len), (v, u, len)]);
    let graph = Digraph::new(n, arcs).unwrap();
    let s = rng.gen_range(0..n);
    let t = (s + rng.gen_range(1..n)) % n;
    Instance {
        seed,
        graph,
        sources: SourceVector::pair(n, s, t, 1.0),
    }
}

/// Undirected simple graph: random spanning tree plus extra edges, integer
/// lengths in `1..=10`.
fn random_connected_edges(
    rng: &mut ChaCha8Rng,
    n: usize,
    count: usize,
) -> Vec<(usize, usize, f64)> {
    let count = count.min(n * (n - 1) / 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for k in 1..n {
        let (u, v) = (order[k], order[rng.gen_range(0..k)]);
        seen.insert((u.min(v), u.max(v)));
        edges.push((u, v));
    }
    while edges.len() < count {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
        }
    }
    edges
        .into_iter()
        .map(|(u, v)| (u, v, f64::from(rng.gen_range(1..=10u32))))
        .collect()
}

/// Connected (as an undirected graph) but infeasible: a node set `S` with
/// positive net supply has every boundary arc pointing into `S`.
pub fn infeasible_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x1f3a5));
    let n = rng.gen_range(4..=8usize);
    let k = rng.gen_range(1..n);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let inside: BTreeSet<usize> = nodes[..k].iter().copied().collect();
    let count = n + rng.gen_range(0..n);
    let edges = random_connected_edges(&mut rng, n, count);
    let arcs = edges.into_iter().map(|(u, v, len)| {
        let (u_in, v_in) = (inside.contains(&u), inside.contains(&v));
        if (u_in && !v_in) || (u_in == v_in && rng.gen_bool(0.5)) {
            (v, u, len)
        } else {
            (u, v, len)
        }
    });
    let graph = Digraph::new(n, arcs).unwrap();
    let amount = f64::from(rng.gen_range(1..=3u32));
    let s = *inside.iter().next().unwrap();
    let t = *nodes[k..].choose(&mut rng).unwrap();
    Instance {
        seed,
        graph,
        sources: SourceVector::pair(n, s, t, amount),
    }
}

pub struct Maze {
    pub instance: Instance,
    pub side: usize,
}

/// Perfect maze (spanning tree of the grid, randomized depth-first search)
/// with unit-length doubled arcs, from the top-left to the bottom-right cell.
pub fn perfect_maze(side: usize, seed: u64) -> Maze {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut arcs = Vec::new();
    while let Some(&cell) = stack.last() {
        let (r, c) = (cell / side, cell % side);
        let mut next = Vec::new();
        if r > 0 {
            next.push(cell - side);
        }
        if r + 1 < side {
            next.push(cell + side);
        }
        if c > 0 {
            next.push(cell - 1);
        }
        if c + 1 < side {
            next.push(cell + 1);
        }
        next.retain(|&x| !visited[x]);
        match next.choose(&mut rng) {
            Some(&x) => {
                visited[x] = true;
                arcs.push((cell, x, 1.0));
                arcs.push((x, cell, 1.0));
                stack.push(x);
            }
            None => {
                stack.pop();
            }
        }
    }
    let graph = Digraph::new(n, arcs).unwrap();
    Maze {
        instance: Instance {
            seed,
            graph,
            sources: SourceVector::pair(n, 0, n - 1, 1.0),
        },
        side,
    }
}

/// Brute-force feasibility: no set `S` with `b(S) > 0` and no arc leaving it.
pub fn feasible_by_cuts(g: &Digraph<f64>, b: &SourceVector<f64>) -> bool {
    let n = g.node_count();
    assert!(n <= 16);
    (1u32..(1 << n)).all(|mask| {
        let inside = |v: usize| mask & (1 << v) != 0;
        let supply: f64 = (0..n).filter(|&v| inside(v)).map(|v| b[v]).sum();
        supply <= 1e-12 || g.arcs().iter().any(|a| inside(a.tail) && !inside(a.head))
    })
}

/// Arcs of the unique shortest `s`–`t` path, or `None` when several
/// shortest paths exist or `t` is unreachable.
pub fn unique_shortest_path(g: &Digraph<f64>, s: usize, t: usize) -> Option<BTreeSet<usize>> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut ways = vec![0u64; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[s] = 0.0;
    ways[s] = 1;
    for _ in 0..n {
        let Some(u) = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for &e in g.out_arcs(u) {
            let a = g.arc(e);
            let cand = dist[u] + a.length;
            if cand < dist[a.head] - 1e-12 {
                dist[a.head] = cand;
                ways[a.head] = ways[u];
                pred[a.head] = e;
            } else if (cand - dist[a.head]).abs() <= 1e-12 && !done[a.head] {
                ways[a.head] += ways[u];
            }
        }
    }
    if ways[t] != 1 {
        return None;
    }
    let mut path = BTreeSet::new();
    let mut v = t;
    while v != s {
        let e = pred[v];
        path.insert(e);
        v = g.arc(e).tail;
    }
    Some(path)
}
