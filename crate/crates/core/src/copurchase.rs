//! Weighted user-user co-purchase network: an edge joins two users who rated
//! at least one common item, weighted by the number of shared items.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RatingsTable;

/// Which degree d_i the degree-corrected existence model uses.
///
/// `Weighted` (the default) is vertex strength Σ_j A_ij; `Raw` counts
/// neighbors. The blockmodel's Poisson mean d_i·d_j·θ follows either
/// convention — weighted matches total-edge-weight bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeMode {
    Weighted,
    Raw,
}

/// Sparse symmetric user-user adjacency with per-vertex degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoPurchaseGraph {
    /// Vertex → user id, ascending by user id.
    user_ids: Vec<u32>,
    user_index: HashMap<u32, usize>,
    /// Per-vertex neighbor list `(vertex, weight)`, sorted by vertex.
    adjacency: Vec<Vec<(usize, f64)>>,
    /// d_i per the graph's `DegreeMode`.
    degrees: Vec<f64>,
    degree_mode: DegreeMode,
    /// Number of undirected edges (dyads with positive weight).
    edge_count: usize,
}

impl CoPurchaseGraph {
    pub fn n(&self) -> usize {
        self.user_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn degree_mode(&self) -> DegreeMode {
        self.degree_mode
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn vertex_of(&self, user: u32) -> Option<usize> {
        self.user_index.get(&user).copied()
    }

    pub fn user_of(&self, vertex: usize) -> u32 {
        self.user_ids[vertex]
    }

    /// Neighbors of `vertex` as `(vertex, weight)`, ascending by vertex.
    pub fn neighbors(&self, vertex: usize) -> &[(usize, f64)] {
        &self.adjacency[vertex]
    }

    /// A_ij by vertex pair (0 for non-edges and the diagonal).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adjacency[i].binary_search_by(|&(v, _)| v.cmp(&j)) {
            Ok(pos) => self.adjacency[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Users with no co-purchase partner (d_i = 0); handled by the fallback
    /// neighbor policy downstream.
    pub fn isolated_vertices(&self) -> Vec<u32> {
        (0..self.n())
            .filter(|&v| self.adjacency[v].is_empty())
            .map(|v| self.user_ids[v])
            .collect()
    }

    /// Edge list `i<TAB>j<TAB>weight`, one line per undirected edge, vertices
    /// as user ids with the smaller id first, sorted lexicographically.
    pub fn export_edge_list(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n() {
            for &(w, weight) in &self.adjacency[v] {
                if w > v {
                    out.push_str(&format!(
                        "{}\t{}\t{}\n",
                        self.user_ids[v], self.user_ids[w], weight as u64
                    ));
                }
            }
        }
        out
    }

    /// Builds a graph directly from an edge list (test and fixture path).
    /// Edges are `(user_a, user_b, weight)`; both orientations and repeats
    /// are rejected.
    pub fn from_edges(user_ids: &[u32], edges: &[(u32, u32, f64)], mode: DegreeMode) -> Result<Self> {
        let mut ids = user_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != user_ids.len() {
            return Err(Error::validation("duplicate user ids"));
        }
        let user_index: HashMap<u32, usize> =
            ids.iter().enumerate().map(|(v, &u)| (u, v)).collect();
        let n = ids.len();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut edge_count = 0usize;
        for &(a, b, w) in edges {
            let (&va, &vb) = match (user_index.get(&a), user_index.get(&b)) {
                (Some(va), Some(vb)) => (va, vb),
                _ => return Err(Error::validation(format!("edge ({a},{b}) has unknown user"))),
            };
            if va == vb {
                return Err(Error::validation(format!("self-loop on user {a}")));
            }
            if w <= 0.0 || w.fract() != 0.0 {
                return Err(Error::validation(format!(
                    "edge ({a},{b}) weight {w} is not a positive integer"
                )));
            }
            if adjacency[va].iter().any(|&(v, _)| v == vb) {
                return Err(Error::validation(format!("duplicate edge ({a},{b})")));
            }
            adjacency[va].push((vb, w));
            adjacency[vb].push((va, w));
            edge_count += 1;
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        let degrees = compute_degrees(&adjacency, mode);
        Ok(CoPurchaseGraph {
            user_ids: ids,
            user_index,
            adjacency,
            degrees,
            degree_mode: mode,
            edge_count,
        })
    }
}

fn compute_degrees(adjacency: &[Vec<(usize, f64)>], mode: DegreeMode) -> Vec<f64> {
    adjacency
        .iter()
        .map(|list| match mode {
            DegreeMode::Weighted => list.iter().map(|&(_, w)| w).sum(),
            DegreeMode::Raw => list.len() as f64,
        })
        .collect()
}

/// Builds the co-purchase graph from a training split with weighted degrees.
pub fn build_graph(train: &RatingsTable) -> Result<CoPurchaseGraph> {
    build_graph_with_mode(train, DegreeMode::Weighted)
}

/// As [`build_graph`], with an explicit degree convention.
pub fn build_graph_with_mode(train: &RatingsTable, mode: DegreeMode) -> Result<CoPurchaseGraph> {
    if train.is_empty() {
        return Err(Error::validation(
            "cannot build a co-purchase graph from an empty training set",
        ));
    }
    let user_ids = train.user_ids();
    let user_index: HashMap<u32, usize> = user_ids
        .iter()
        .enumerate()
        .map(|(v, &u)| (u, v))
        .collect();
    let n = user_ids.len();

    // Invert to item → rater vertices, then count pairs per item into a
    // dense lower triangle (n is at most a few thousand users).
    let mut raters: HashMap<u32, Vec<usize>> = HashMap::new();
    for rec in train.records() {
        raters
            .entry(rec.item_id)
            .or_default()
            .push(user_index[&rec.user_id]);
    }
    let tri = |i: usize, j: usize| {
        // i > j
        i * (i - 1) / 2 + j
    };
    let mut counts = vec![0u32; n * (n.saturating_sub(1)) / 2];
    let mut item_ids: Vec<u32> = raters.keys().copied().collect();
    item_ids.sort_unstable();
    for item in item_ids {
        let mut vs = raters[&item].clone();
        vs.sort_unstable();
        vs.dedup();
        for a in 0..vs.len() {
            for b in (a + 1)..vs.len() {
                counts[tri(vs[b], vs[a])] += 1;
            }
        }
    }

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut edge_count = 0usize;
    for i in 1..n {
        for j in 0..i {
            let c = counts[tri(i, j)];
            if c > 0 {
                adjacency[i].push((j, f64::from(c)));
                adjacency[j].push((i, f64::from(c)));
                edge_count += 1;
            }
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(v, _)| v);
    }
    let degrees = compute_degrees(&adjacency, mode);
    Ok(CoPurchaseGraph {
        user_ids,
        user_index,
        adjacency,
        degrees,
        degree_mode: mode,
        edge_count,
    })
}
