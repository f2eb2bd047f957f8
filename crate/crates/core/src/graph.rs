//! Undirected agent communication topologies.
//!
//! A [`Graph`] stores only its edge set; the neighbourhood `N_i` used by the
//! estimator always contains `i` itself, which is never stored as a self-loop.
//! Graphs can be written as short grammar strings:
//!
//! ```text
//! circulant:N=8,m=2
//! complete:N=5
//! edges:0-1,1-2,2-0      (vertex count = largest id + 1)
//! edges:N=4;0-1,2-3      (explicit vertex count)
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, Matrix};

/// Exhaustive circulant-isomorphism search is capped at this many vertices.
pub const ISOMORPHISM_SEARCH_LIMIT: usize = 10;
/// Hamiltonian-cycle backtracking is capped at this many vertices.
pub const CYCLE_SEARCH_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// `n` isolated vertices.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::BadParams(format!("edge {i}-{j} out of range for N={}", self.n)));
        }
        if i == j {
            return Err(Error::BadParams(format!("self-loop at vertex {i}")));
        }
        self.adj[i].insert(j);
        self.adj[j].insert(i);
        Ok(())
    }

    /// Vertex `i` joined to `i±1, …, i±m (mod N)`.
    pub fn circulant(n: usize, m: usize) -> Result<Self> {
        if n < 2 || m < 1 || m > n - 1 {
            return Err(Error::BadParams(format!("circulant needs N >= 2 and 1 <= m <= N-1, got N={n}, m={m}")));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for s in 1..=m {
                let j = (i + s) % n;
                if j != i {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::BadParams("complete graph needs N >= 1".into()));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_edge(i, j)?;
            }
        }
        Ok(g)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        Self::circulant(n, 1)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &j in &self.adj[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Neighbours of `i`, excluding `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    /// `N_i = {i} ∪ {j : (i, j) ∈ E}`, sorted.
    pub fn neighborhood(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.adj[i].iter().copied().collect();
        let pos = v.partition_point(|&j| j < i);
        v.insert(pos, i);
        v
    }

    /// Row-wise membership masks of the neighbourhoods (diagonal included).
    pub fn support_mask(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| i == j || self.has_edge(i, j)).collect())
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for (i, j) in self.edges() {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `L = D − Adj`.
    pub fn laplacian(&self) -> Matrix {
        laplacian_of(self.n, &self.edges())
    }

    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        sym_eigenvalues(&self.laplacian()).expect("Laplacian is symmetric")
    }

    /// `λ₂(L)`; zero for a single vertex or a disconnected graph.
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.n < 2 || !self.is_connected() {
            return 0.0;
        }
        self.laplacian_spectrum()[1].max(0.0)
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_complete(&self) -> bool {
        self.edge_count() == self.n * self.n.saturating_sub(1) / 2
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let edges: Vec<(usize, usize)> = self.edges().into_iter().map(|(i, j)| (perm[i], perm[j])).collect();
        Self::from_edges(self.n, &edges)
    }

    /// Grammar string that parses back to this graph.
    pub fn to_grammar(&self) -> String {
        let edges: Vec<String> = self.edges().iter().map(|(i, j)| format!("{i}-{j}")).collect();
        format!("edges:N={};{}", self.n, edges.join(","))
    }
}

fn laplacian_of(n: usize, edges: &[(usize, usize)]) -> Matrix {
    let mut l = Matrix::zeros(n, n);
    for &(i, j) in edges {
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
    }
    l
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::BadParams(format!("permutation has length {}, expected {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::BadParams("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Connection offsets `{±1, …, ±m} mod N` of a circulant graph, without 0.
fn circulant_offsets(n: usize, m: usize) -> BTreeSet<usize> {
    (1..=m).flat_map(|s| [s % n, (n - s % n) % n]).filter(|&s| s != 0).collect()
}

/// Closed-form Laplacian spectrum of `circulant(N, m)`, ascending:
/// `λ_k = Σ_{s∈S} (1 − cos(2π s k / N))`.
pub fn circulant_laplacian_spectrum(n: usize, m: usize) -> Vec<f64> {
    let offsets = circulant_offsets(n, m);
    let mut ev: Vec<f64> = (0..n)
        .map(|k| {
            offsets
                .iter()
                .map(|&s| 1.0 - (2.0 * std::f64::consts::PI * (s * k) as f64 / n as f64).cos())
                .sum()
        })
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Checks that `perm` carries `g` onto `circulant(N, m)`, at any `N`.
pub fn verify_circulant_isomorphism(g: &Graph, m: usize, perm: &[usize]) -> Result<bool> {
    let target = Graph::circulant(g.n, m)?;
    Ok(check_permutation(perm, g.n).is_ok() && g.relabel(perm)? == target)
}

/// Searches for a relabeling of `g` onto `circulant(N, m)`.
///
/// Exhaustive backtracking with degree pruning; vertex 0 is pinned to 0 since
/// circulant graphs are vertex-transitive.
pub fn circulant_isomorphism(g: &Graph, m: usize) -> Result<Option<Vec<usize>>> {
    let n = g.n;
    if n > ISOMORPHISM_SEARCH_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: ISOMORPHISM_SEARCH_LIMIT,
        });
    }
    let target = Graph::circulant(n, m)?;
    if g.edge_count() != target.edge_count() {
        return Ok(None);
    }
    let deg = target.degree(0);
    if (0..n).any(|v| g.degree(v) != deg) {
        return Ok(None);
    }
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    perm[0] = 0;
    used[0] = true;
    if extend_isomorphism(g, &target, 1, &mut perm, &mut used) {
        Ok(Some(perm))
    } else {
        Ok(None)
    }
}

fn extend_isomorphism(g: &Graph, target: &Graph, v: usize, perm: &mut [usize], used: &mut [bool]) -> bool {
    let n = g.n;
    if v == n {
        return true;
    }
    for image in 0..n {
        if used[image] {
            continue;
        }
        let consistent = (0..v).all(|u| g.has_edge(u, v) == target.has_edge(perm[u], image));
        if !consistent {
            continue;
        }
        perm[v] = image;
        used[image] = true;
        if extend_isomorphism(g, target, v + 1, perm, used) {
            return true;
        }
        used[image] = false;
        perm[v] = usize::MAX;
    }
    false
}

/// Finds `m` and a relabeling such that `g ≅ circulant(N, m)`, if any.
pub fn find_circulant_structure(g: &Graph) -> Result<Option<(usize, Vec<usize>)>> {
    if g.n < 2 {
        return Ok(None);
    }
    for m in 1..g.n {
        if let Some(p) = circulant_isomorphism(g, m)? {
            return Ok(Some((m, p)));
        }
        if Graph::circulant(g.n, m)?.is_complete() {
            break;
        }
    }
    Ok(None)
}

/// Splits `L̄ = L_cycle + L1` along a Hamiltonian cycle of the graph.
#[derive(Clone, Debug)]
pub struct CycleDecomposition {
    pub cycle_order: Vec<usize>,
    pub l_cycle: Matrix,
    pub l1: Matrix,
}

pub fn cycle_decompose(g: &Graph, cycle_order: &[usize]) -> Result<CycleDecomposition> {
    let n = g.n;
    if n < 3 {
        return Err(Error::NotACycle(format!("a simple cycle needs at least 3 vertices, N={n}")));
    }
    check_permutation(cycle_order, n).map_err(|_| Error::NotACycle("order is not a permutation of the vertices".into()))?;
    let mut cycle_edges = BTreeSet::new();
    for k in 0..n {
        let (i, j) = (cycle_order[k], cycle_order[(k + 1) % n]);
        if !g.has_edge(i, j) {
            return Err(Error::NotACycle(format!("{i}-{j} is not an edge")));
        }
        cycle_edges.insert((i.min(j), i.max(j)));
    }
    let cycle: Vec<(usize, usize)> = cycle_edges.iter().copied().collect();
    let rest: Vec<(usize, usize)> = g.edges().into_iter().filter(|e| !cycle_edges.contains(e)).collect();
    Ok(CycleDecomposition {
        cycle_order: cycle_order.to_vec(),
        l_cycle: laplacian_of(n, &cycle),
        l1: laplacian_of(n, &rest),
    })
}

/// Backtracking search for a Hamiltonian cycle starting at vertex 0.
pub fn hamiltonian_cycle(g: &Graph) -> Result<Option<Vec<usize>>> {
    let n = g.n;
    if n > CYCLE_SEARCH_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: CYCLE_SEARCH_LIMIT,
        });
    }
    if n < 3 {
        return Ok(None);
    }
    let mut path = vec![0];
    let mut used = vec![false; n];
    used[0] = true;
    Ok(extend_cycle(g, &mut path, &mut used).then_some(path))
}

fn extend_cycle(g: &Graph, path: &mut Vec<usize>, used: &mut [bool]) -> bool {
    let last = *path.last().unwrap();
    if path.len() == g.n {
        return g.has_edge(last, path[0]);
    }
    let next: Vec<usize> = g.neighbors(last).filter(|&j| !used[j]).collect();
    for j in next {
        used[j] = true;
        path.push(j);
        if extend_cycle(g, path, used) {
            return true;
        }
        path.pop();
        used[j] = false;
    }
    false
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("graph spec `{s}` lacks a `kind:` prefix")))?;
        match kind {
            "circulant" => {
                let params = parse_params(rest)?;
                Graph::circulant(param(&params, "N")?, param(&params, "m")?)
            }
            "complete" => {
                let params = parse_params(rest)?;
                Graph::complete(param(&params, "N")?)
            }
            "cycle" => {
                let params = parse_params(rest)?;
                Graph::cycle(param(&params, "N")?)
            }
            "edges" => parse_edges(rest),
            other => Err(Error::Parse(format!("unknown graph kind `{other}`"))),
        }
    }
}

fn parse_params(s: &str) -> Result<Vec<(String, usize)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{p}`")))?;
            let v = v.trim().parse().map_err(|_| Error::Parse(format!("bad integer `{v}`")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn param(params: &[(String, usize)], key: &str) -> Result<usize> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("missing parameter `{key}`")))
}

fn parse_edges(s: &str) -> Result<Graph> {
    let (explicit_n, list) = match s.split_once(';') {
        Some((head, tail)) => {
            let params = parse_params(head)?;
            (Some(param(&params, "N")?), tail)
        }
        None => (None, s),
    };
    let mut edges = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (a, b) = tok
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("expected i-j, got `{tok}`")))?;
        let a: usize = a.trim().parse().map_err(|_| Error::Parse(format!("bad vertex `{a}`")))?;
        let b: usize = b.trim().parse().map_err(|_| Error::Parse(format!("bad vertex `{b}`")))?;
        edges.push((a, b));
    }
    let n = explicit_n.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
    Graph::from_edges(n, &edges)
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_grammar())
    }
}
