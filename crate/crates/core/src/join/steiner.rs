//! Minimum-edge Steiner trees over the referential graph.
//!
//! The optimum edge count comes from a Dreyfus–Wagner dynamic program over
//! terminal subsets (unit edge weights). Among all optimal trees the one with
//! the lexicographically smallest sorted edge list is selected: edges are
//! tried in key order and kept whenever an optimal tree containing the edges
//! kept so far plus the candidate still exists. That test contracts the
//! forced edges and re-runs the program with their endpoints as extra
//! terminals.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::schema::ReferentialGraph;

use super::JoinError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteinerTree {
    /// Node indices of the tree, ascending.
    pub nodes: Vec<usize>,
    /// Edge indices into `ReferentialGraph::edges`, sorted by edge key.
    pub edges: Vec<usize>,
}

impl SteinerTree {
    pub fn node_names<'g>(&self, graph: &'g ReferentialGraph) -> Vec<&'g str> {
        self.nodes.iter().map(|&n| graph.nodes()[n].as_str()).collect()
    }
}

/// Resolves terminal names to node indices, preserving first-seen order.
pub(crate) fn resolve_terminals<S: AsRef<str>>(
    graph: &ReferentialGraph,
    terminals: &[S],
) -> Result<Vec<usize>, JoinError> {
    if terminals.is_empty() {
        return Err(JoinError::NoTerminals);
    }
    let mut out = Vec::new();
    for t in terminals {
        let idx = graph
            .node_index(t.as_ref())
            .ok_or_else(|| JoinError::UnknownTable(t.as_ref().to_string()))?;
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    Ok(out)
}

pub fn steiner_tree<S: AsRef<str>>(graph: &ReferentialGraph, terminals: &[S]) -> Result<SteinerTree, JoinError> {
    let terms = resolve_terminals(graph, terminals)?;
    let component = graph.component_indices(terms[0]);
    if terms.iter().any(|t| !component.contains(t)) {
        let mut components: Vec<BTreeSet<String>> = Vec::new();
        for &t in &terms {
            let comp: BTreeSet<String> = graph
                .component_indices(t)
                .into_iter()
                .map(|i| graph.nodes()[i].clone())
                .collect();
            if !components.contains(&comp) {
                components.push(comp);
            }
        }
        return Err(JoinError::Disconnected { components });
    }
    Ok(optimal_tree(graph, &terms))
}

fn optimal_tree(graph: &ReferentialGraph, terms: &[usize]) -> SteinerTree {
    let n = graph.node_count();
    let all_edges: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.a, e.b)).collect();
    let target = contracted_cost(n, &all_edges, terms, &[]).expect("terminals share a component");

    let mut order: Vec<usize> = (0..all_edges.len()).filter(|&e| all_edges[e].0 != all_edges[e].1).collect();
    order.sort_by_key(|&e| graph.edge_key(e));

    let mut forced: Vec<usize> = Vec::new();
    let mut uf = UnionFind::new(n);
    for e in order {
        if forced.len() == target {
            break;
        }
        let (a, b) = all_edges[e];
        if uf.find(a) == uf.find(b) {
            continue;
        }
        let mut trial = forced.clone();
        trial.push(e);
        if contracted_cost(n, &all_edges, terms, &trial) == Some(target) {
            uf.union(a, b);
            forced = trial;
        }
    }

    let mut nodes: BTreeSet<usize> = terms.iter().copied().collect();
    for &e in &forced {
        nodes.insert(all_edges[e].0);
        nodes.insert(all_edges[e].1);
    }
    forced.sort_by_key(|&e| graph.edge_key(e));
    SteinerTree { nodes: nodes.into_iter().collect(), edges: forced }
}

/// Minimum number of edges of a Steiner tree for `terms` that contains every
/// edge in `forced` (which must be a forest). `None` when unreachable.
fn contracted_cost(n: usize, edges: &[(usize, usize)], terms: &[usize], forced: &[usize]) -> Option<usize> {
    let mut uf = UnionFind::new(n);
    for &e in forced {
        uf.union(edges[e].0, edges[e].1);
    }
    let mut super_of = vec![usize::MAX; n];
    let mut count = 0;
    for v in 0..n {
        let r = uf.find(v);
        if super_of[r] == usize::MAX {
            super_of[r] = count;
            count += 1;
        }
        super_of[v] = super_of[r];
    }
    let mut adjacency = vec![Vec::new(); count];
    for &(a, b) in edges {
        let (sa, sb) = (super_of[a], super_of[b]);
        if sa != sb {
            adjacency[sa].push(sb);
            adjacency[sb].push(sa);
        }
    }
    let mut contracted_terms: Vec<usize> = Vec::new();
    for &t in terms.iter().chain(forced.iter().map(|&e| &edges[e].0)) {
        let s = super_of[t];
        if !contracted_terms.contains(&s) {
            contracted_terms.push(s);
        }
    }
    dreyfus_wagner(&adjacency, &contracted_terms).map(|c| c + forced.len())
}

const INF: u32 = u32::MAX / 4;

/// Classic subset dynamic program with unit edge weights.
fn dreyfus_wagner(adjacency: &[Vec<usize>], terms: &[usize]) -> Option<usize> {
    let n = adjacency.len();
    let k = terms.len();
    if k <= 1 {
        return Some(0);
    }
    let full = (1usize << k) - 1;
    let mut dp = vec![vec![INF; n]; full + 1];
    for (i, &t) in terms.iter().enumerate() {
        dp[1 << i][t] = 0;
    }
    for mask in 1..=full {
        if mask.count_ones() > 1 {
            for v in 0..n {
                let mut best = dp[mask][v];
                let mut sub = (mask - 1) & mask;
                while sub > 0 {
                    let rest = mask ^ sub;
                    if sub < rest {
                        let c = dp[sub][v].saturating_add(dp[rest][v]);
                        if c < best {
                            best = c;
                        }
                    }
                    sub = (sub - 1) & mask;
                }
                dp[mask][v] = best;
            }
        }
        // shortest-path relaxation
        let row = &mut dp[mask];
        let mut heap: BinaryHeap<Reverse<(u32, usize)>> =
            (0..n).filter(|&v| row[v] < INF).map(|v| Reverse((row[v], v))).collect();
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > row[v] {
                continue;
            }
            for &w in &adjacency[v] {
                if d + 1 < row[w] {
                    row[w] = d + 1;
                    heap.push(Reverse((d + 1, w)));
                }
            }
        }
    }
    let best = dp[full].iter().copied().min().unwrap_or(INF);
    (best < INF).then_some(best as usize)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}
