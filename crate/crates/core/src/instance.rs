//! Instance files: DIMACS min-cost-flow and a native edge list.
//!
//! DIMACS ids are 1-based:
//!
//! ```text
//! c comment
//! p min 2 1
//! n 1 1
//! n 2 -1
//! a 1 2 0 99 2
//! ```
//!
//! Native ids are 0-based, `#` starts a comment line:
//!
//! ```text
//! node 0 1
//! node 2 -1
//! arc 0 2 3
//! arc 0 1 1
//! arc 1 2 1
//! ```
//!
//! [`serialize`] writes the canonical form (comments, node lines in id order,
//! arc lines in index order), which parses back to the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{is_feasible, Digraph, SourceVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Format {
    Dimacs,
    Native,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dimacs" | "min" => Ok(Self::Dimacs),
            "native" | "txt" => Ok(Self::Native),
            other => Err(Error::Domain(format!("unknown instance format '{other}'"))),
        }
    }
}

impl Format {
    /// Guess from content: a `p` line means DIMACS.
    pub fn sniff(bytes: &[u8]) -> Self {
        let text = String::from_utf8_lossy(bytes);
        let dimacs = text
            .lines()
            .map(str::trim_start)
            .any(|l| l.starts_with("p ") || l.starts_with("a ") || l.starts_with("n "));
        if dimacs {
            Self::Dimacs
        } else {
            Self::Native
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile<T> {
    pub format: Format,
    pub graph: Digraph<T>,
    pub sources: SourceVector<T>,
    pub name: Option<String>,
    pub comments: Vec<String>,
    pub warnings: Vec<String>,
    /// Raw DIMACS capacity tokens, one per arc; empty for native input.
    pub capacities: Vec<String>,
}

impl<T: Scalar> InstanceFile<T> {
    pub fn new(format: Format, graph: Digraph<T>, sources: SourceVector<T>) -> Result<Self> {
        if sources.len() != graph.node_count() {
            return Err(Error::Dimension {
                expected: graph.node_count(),
                found: sources.len(),
            });
        }
        Ok(Self {
            format,
            graph,
            sources,
            name: None,
            comments: Vec::new(),
            warnings: Vec::new(),
            capacities: Vec::new(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<F: FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<F> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{token}'")))
}

fn scalar<T: Scalar>(line: usize, token: Option<&str>, what: &str) -> Result<T> {
    let value: f64 = field(line, token, what)?;
    if !value.is_finite() {
        return Err(parse_err(line, format!("{what} must be finite")));
    }
    Ok(T::lit(value))
}

fn no_trailing(line: usize, mut tokens: std::str::SplitWhitespace<'_>) -> Result<()> {
    match tokens.next() {
        Some(extra) => Err(parse_err(line, format!("unexpected token '{extra}'"))),
        None => Ok(()),
    }
}

pub fn parse_instance<T: Scalar>(bytes: &[u8], format: Format) -> Result<InstanceFile<T>> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("input is not UTF-8: {e}")))?;
    match format {
        Format::Dimacs => parse_dimacs(text),
        Format::Native => parse_native(text),
    }
}

fn parse_dimacs<T: Scalar>(text: &str) -> Result<InstanceFile<T>> {
    let mut header: Option<(usize, usize)> = None;
    let mut supplies: BTreeMap<usize, T> = BTreeMap::new();
    let mut arcs: Vec<(usize, usize, T)> = Vec::new();
    let mut capacities = Vec::new();
    let mut comments = Vec::new();

    for (ln, line) in Lines::new(text) {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "c" || trimmed.starts_with("c ") {
            comments.push(
                trimmed
                    .strip_prefix('c')
                    .unwrap_or("")
                    .trim_start()
                    .to_string(),
            );
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let kind = tokens.next().expect("non-empty line");
        match kind {
            "p" => {
                if header.is_some() {
                    return Err(parse_err(ln, "second problem line"));
                }
                let problem: String = field(ln, tokens.next(), "problem type")?;
                if problem != "min" {
                    return Err(parse_err(
                        ln,
                        format!("expected problem type 'min', got '{problem}'"),
                    ));
                }
                let n = field(ln, tokens.next(), "node count")?;
                let m = field(ln, tokens.next(), "arc count")?;
                no_trailing(ln, tokens)?;
                header = Some((n, m));
            }
            "n" => {
                let (n, _) =
                    header.ok_or_else(|| parse_err(ln, "node line before problem line"))?;
                let id: usize = field(ln, tokens.next(), "node id")?;
                if id == 0 || id > n {
                    return Err(parse_err(ln, format!("node id {id} outside 1..={n}")));
                }
                let value = scalar(ln, tokens.next(), "supply")?;
                no_trailing(ln, tokens)?;
                if supplies.insert(id - 1, value).is_some() {
                    return Err(parse_err(ln, format!("node {id} listed twice")));
                }
            }
            "a" => {
                let (n, _) = header.ok_or_else(|| parse_err(ln, "arc line before problem line"))?;
                let u: usize = field(ln, tokens.next(), "tail")?;
                let v: usize = field(ln, tokens.next(), "head")?;
                for id in [u, v] {
                    if id == 0 || id > n {
                        return Err(parse_err(ln, format!("node id {id} outside 1..={n}")));
                    }
                }
                let low: String = field(ln, tokens.next(), "lower bound")?;
                if !low.parse::<f64>().is_ok_and(|x| x == 0.0) {
                    return Err(Error::UnsupportedCapacity { line: ln, low });
                }
                let cap: String = field(ln, tokens.next(), "capacity")?;
                let cost: T = scalar(ln, tokens.next(), "cost")?;
                no_trailing(ln, tokens)?;
                if cost <= T::zero() {
                    return Err(Error::Domain(format!(
                        "line {ln}: arc cost must be positive, got {cost}"
                    )));
                }
                arcs.push((u - 1, v - 1, cost));
                capacities.push(cap);
            }
            other => return Err(parse_err(ln, format!("unknown line type '{other}'"))),
        }
    }

    let (n, m) = header.ok_or_else(|| parse_err(0, "missing problem line"))?;
    if arcs.len() != m {
        return Err(parse_err(
            0,
            format!("problem line declares {m} arcs, found {}", arcs.len()),
        ));
    }
    let mut b = vec![T::zero(); n];
    for (id, value) in supplies {
        b[id] = value;
    }
    let graph = Digraph::new(n, arcs)?;
    let sources = SourceVector::new(b)?;
    let mut file = InstanceFile::new(Format::Dimacs, graph, sources)?;
    if !capacities.is_empty() {
        file.warnings.push(format!(
            "ignored upper capacities on {} arcs",
            capacities.len()
        ));
    }
    file.comments = comments;
    file.capacities = capacities;
    Ok(file)
}

fn parse_native<T: Scalar>(text: &str) -> Result<InstanceFile<T>> {
    let mut supplies: BTreeMap<usize, T> = BTreeMap::new();
    let mut arcs = Vec::new();
    let mut comments = Vec::new();
    let mut n = 0usize;

    for (ln, line) in Lines::new(text) {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            comments.push(comment.trim_start().to_string());
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        match tokens.next().expect("non-empty line") {
            "node" => {
                let id: usize = field(ln, tokens.next(), "node id")?;
                let value = match tokens.next() {
                    Some(tok) => scalar(ln, Some(tok), "supply")?,
                    None => T::zero(),
                };
                no_trailing(ln, tokens)?;
                if supplies.insert(id, value).is_some() {
                    return Err(parse_err(ln, format!("node {id} listed twice")));
                }
                n = n.max(id + 1);
            }
            "arc" => {
                let u: usize = field(ln, tokens.next(), "tail")?;
                let v: usize = field(ln, tokens.next(), "head")?;
                let len: T = scalar(ln, tokens.next(), "length")?;
                no_trailing(ln, tokens)?;
                if len <= T::zero() {
                    return Err(Error::Domain(format!(
                        "line {ln}: arc length must be positive, got {len}"
                    )));
                }
                n = n.max(u + 1).max(v + 1);
                arcs.push((u, v, len));
            }
            other => return Err(parse_err(ln, format!("unknown line type '{other}'"))),
        }
    }

    let mut b = vec![T::zero(); n];
    for (id, value) in supplies {
        b[id] = value;
    }
    let graph = Digraph::new(n, arcs)?;
    let sources = SourceVector::new(b)?;
    let mut file = InstanceFile::new(Format::Native, graph, sources)?;
    file.comments = comments;
    Ok(file)
}

/// Canonical text of `file` in its own format.
pub fn serialize<T: Scalar>(file: &InstanceFile<T>) -> String {
    serialize_as(file, file.format)
}

pub fn serialize_as<T: Scalar>(file: &InstanceFile<T>, format: Format) -> String {
    let mut out = String::new();
    let g = &file.graph;
    let b = &file.sources;
    match format {
        Format::Dimacs => {
            for c in &file.comments {
                push_comment(&mut out, "c", c);
            }
            writeln!(out, "p min {} {}", g.node_count(), g.arc_count()).unwrap();
            for (i, &x) in b.iter().enumerate() {
                if x != T::zero() {
                    writeln!(out, "n {} {}", i + 1, x).unwrap();
                }
            }
            for (e, a) in g.arcs().iter().enumerate() {
                let cap = file.capacities.get(e).map(String::as_str).unwrap_or("0");
                writeln!(
                    out,
                    "a {} {} 0 {} {}",
                    a.tail + 1,
                    a.head + 1,
                    cap,
                    a.length
                )
                .unwrap();
            }
        }
        Format::Native => {
            for c in &file.comments {
                push_comment(&mut out, "#", c);
            }
            let n = g.node_count();
            let last_touched = g.arcs().iter().any(|a| a.tail + 1 == n || a.head + 1 == n);
            for (i, &x) in b.iter().enumerate() {
                if x != T::zero() {
                    writeln!(out, "node {i} {x}").unwrap();
                } else if i + 1 == n && !last_touched {
                    writeln!(out, "node {i}").unwrap();
                }
            }
            for a in g.arcs() {
                writeln!(out, "arc {} {} {}", a.tail, a.head, a.length).unwrap();
            }
        }
    }
    out
}

fn push_comment(out: &mut String, marker: &str, text: &str) {
    if text.is_empty() {
        writeln!(out, "{marker}").unwrap();
    } else {
        writeln!(out, "{marker} {text}").unwrap();
    }
}

/// Parameters of [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GeneratorSpec {
    pub nodes: usize,
    pub arcs: usize,
    /// Lengths are drawn uniformly from `1..=max_length`.
    pub max_length: u32,
    /// `‖b‖_∞ ≤ max_supply`.
    pub max_supply: u32,
}

pub const GENERATOR_ATTEMPTS: usize = 10_000;

/// Seeded random feasible instance: a random spanning tree plus extra arcs,
/// integer lengths and a nonzero balanced integer `b`. Rejection-samples
/// until the instance is feasible.
pub fn random_instance<T: Scalar>(seed: u64, spec: GeneratorSpec) -> Result<InstanceFile<T>> {
    let GeneratorSpec {
        nodes: n,
        arcs: m,
        max_length,
        max_supply,
    } = spec;
    if n < 2 {
        return Err(Error::Domain(
            "random instances need at least 2 nodes".into(),
        ));
    }
    if m + 1 < n || m > n * (n - 1) {
        return Err(Error::Domain(format!(
            "arc count {m} outside {}..={}",
            n - 1,
            n * (n - 1)
        )));
    }
    if max_length == 0 || max_supply == 0 {
        return Err(Error::Domain(
            "max_length and max_supply must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=GENERATOR_ATTEMPTS {
        let (graph, sources) = draw(&mut rng, spec);
        if is_feasible(&graph, &sources) {
            log::debug!("seed {seed}: feasible instance after {attempt} draws");
            let mut file = InstanceFile::new(Format::Native, graph, sources)?;
            file.comments.push(format!(
                "random seed={seed} n={n} m={m} lmax={max_length} bmax={max_supply}"
            ));
            return Ok(file.with_name(format!("random-{seed}")));
        }
    }
    Err(Error::Generator {
        attempts: GENERATOR_ATTEMPTS,
    })
}

fn draw<T: Scalar>(rng: &mut ChaCha8Rng, spec: GeneratorSpec) -> (Digraph<T>, SourceVector<T>) {
    let n = spec.nodes;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(spec.arcs);
    for k in 1..n {
        let u = order[k];
        let v = order[rng.gen_range(0..k)];
        pairs.push(if rng.gen_bool(0.5) { (u, v) } else { (v, u) });
    }
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && !pairs.contains(&(u, v)))
        .collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(spec.arcs - pairs.len()));
    pairs.shuffle(rng);
    let arcs = pairs.into_iter().map(|(u, v)| {
        (
            u,
            v,
            T::from_count(rng.gen_range(1..=spec.max_length as usize)),
        )
    });
    let graph = Digraph::new(n, arcs).expect("generated graph is simple");

    let bmax = i64::from(spec.max_supply);
    let b = loop {
        let mut b: Vec<i64> = (0..n - 1).map(|_| rng.gen_range(-bmax..=bmax)).collect();
        let last = -b.iter().sum::<i64>();
        if last.abs() <= bmax && (last != 0 || b.iter().any(|&x| x != 0)) {
            b.push(last);
            b.shuffle(rng);
            break b;
        }
    };
    let sources = SourceVector::new(b.into_iter().map(|x| T::lit(x as f64)).collect())
        .expect("balanced by construction");
    (graph, sources)
}
