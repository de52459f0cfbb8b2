//! kNN graphs over the rows of a [`DataMatrix`].
//!
//! Distances are squared Euclidean throughout. Ties are broken by the lower
//! node index so that every backend produces the same graph.

mod vptree;

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

pub use vptree::VpTree;

/// Above this many points `KnnAlgorithm::Auto` switches to the vp-tree.
pub const EXACT_AUTO_MAX_N: usize = 20_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnAlgorithm {
    #[default]
    Auto,
    /// All-pairs brute force.
    Exact,
    /// Exact search through a vantage-point tree.
    VpTree,
}

impl std::str::FromStr for KnnAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(KnnAlgorithm::Auto),
            "exact" => Ok(KnnAlgorithm::Exact),
            "vp-tree" | "vptree" => Ok(KnnAlgorithm::VpTree),
            _ => Err(Error::invalid(format!("unknown kNN algorithm `{s}`"))),
        }
    }
}

/// Adjacency lists in compressed row form. Each node's neighbors are sorted
/// by index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    directed: bool,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    dists: Vec<f64>,
}

impl NeighborGraph {
    /// Builds a graph from per-node `(neighbor, squared distance)` lists.
    pub fn from_lists(lists: Vec<Vec<(usize, f64)>>, k: usize, directed: bool) -> Result<Self> {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut dists = Vec::new();
        for (i, mut list) in lists.into_iter().enumerate() {
            list.sort_by_key(|&(j, _)| j);
            for w in list.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::invalid(format!("duplicate edge {i} -> {}", w[0].0)));
                }
            }
            for (j, d) in list {
                if j == i {
                    return Err(Error::invalid(format!("self edge at node {i}")));
                }
                if j >= n {
                    return Err(Error::invalid(format!("edge {i} -> {j} out of range")));
                }
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::invalid(format!(
                        "bad distance {d} on edge {i} -> {j}"
                    )));
                }
                targets.push(j);
                dists.push(d);
            }
            offsets.push(targets.len());
        }
        let g = Self {
            n,
            k,
            directed,
            offsets,
            targets,
            dists,
        };
        if !directed && !g.is_symmetric() {
            return Err(Error::invalid(
                "undirected graph has an asymmetric edge set",
            ));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbors per node requested at construction (0 if unknown).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn dists(&self, i: usize) -> &[f64] {
        &self.dists[self.offsets[i]..self.offsets[i + 1]]
    }

    /// All stored `(i, j, dist2)` entries. Undirected graphs list each edge
    /// in both orientations.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.dists(i))
                .map(move |(&j, &d)| (i, j, d))
        })
    }

    /// Number of edges: directed arcs, or unordered pairs when undirected.
    pub fn n_edges(&self) -> usize {
        if self.directed {
            self.targets.len()
        } else {
            self.targets.len() / 2
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    fn is_symmetric(&self) -> bool {
        self.entries().all(|(i, j, _)| self.has_edge(j, i))
    }

    /// Undirected union: `{i, j}` is an edge iff `i -> j` or `j -> i`.
    pub fn symmetrize_union(&self) -> NeighborGraph {
        let mut lists: Vec<Vec<(usize, f64)>> = (0..self.n)
            .map(|i| {
                self.neighbors(i)
                    .iter()
                    .copied()
                    .zip(self.dists(i).iter().copied())
                    .collect()
            })
            .collect();
        for (i, j, d) in self.entries() {
            if !self.has_edge(j, i) {
                lists[j].push((i, d));
            }
        }
        Self::from_lists(lists, self.k, false).expect("union of a valid graph is valid")
    }

    /// Node degrees `h_i` (out-degree for directed graphs).
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| self.offsets[i + 1] - self.offsets[i])
            .collect()
    }

    /// Component label per node: the smallest node index in its component.
    /// Directed graphs are treated as undirected.
    pub fn connected_components(&self) -> Vec<usize> {
        let sym;
        let g = if self.directed {
            sym = self.symmetrize_union();
            &sym
        } else {
            self
        };
        let mut label = vec![usize::MAX; g.n];
        let mut queue = VecDeque::new();
        for s in 0..g.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = s;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in g.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = s;
                        queue.push_back(v);
                    }
                }
            }
        }
        label
    }

    pub fn n_components(&self) -> usize {
        self.connected_components()
            .iter()
            .enumerate()
            .filter(|&(i, &l)| i == l)
            .count()
    }

    /// Writes the header `n k directed` followed by `i j dist2` lines.
    /// Undirected edges are written once with `i < j`.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{} {} {}", self.n, self.k, u8::from(self.directed))?;
        for (i, j, d) in self.entries() {
            if self.directed || i < j {
                writeln!(w, "{i} {j} {d:?}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::parse(path, "line 1", "missing header")),
        };
        let h: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::parse(path, "line 1", "expected header `n k directed`");
        if h.len() != 3 {
            return Err(bad_header());
        }
        let n: usize = h[0].parse().map_err(|_| bad_header())?;
        let k: usize = h[1].parse().map_err(|_| bad_header())?;
        let directed = match h[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad_header()),
        };
        let mut lists = vec![Vec::new(); n];
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let pos = format!("line {}", lineno + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| {
                    Some((
                        f[0].parse::<usize>().ok()?,
                        f[1].parse::<usize>().ok()?,
                        f[2].parse::<f64>().ok()?,
                    ))
                })
                .flatten();
            let (i, j, d) =
                parsed.ok_or_else(|| Error::parse(path, pos.clone(), "expected `i j dist2`"))?;
            if i >= n || j >= n {
                return Err(Error::parse(
                    path,
                    pos,
                    format!("node index out of range for n = {n}"),
                ));
            }
            lists[i].push((j, d));
            if !directed {
                lists[j].push((i, d));
            }
        }
        Self::from_lists(lists, k, directed)
    }
}

/// Orders candidates by distance, then index.
#[inline]
pub(crate) fn cmp_candidate(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Directed kNN graph: every node's `k` nearest other rows.
pub fn build_knn(x: &DataMatrix, k: usize, algorithm: KnnAlgorithm) -> Result<NeighborGraph> {
    let n = x.n();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k = {k} must satisfy 1 <= k < n = {n}"
        )));
    }
    let algorithm = match algorithm {
        KnnAlgorithm::Auto if n <= EXACT_AUTO_MAX_N => KnnAlgorithm::Exact,
        KnnAlgorithm::Auto => KnnAlgorithm::VpTree,
        a => a,
    };
    let lists: Vec<Vec<(usize, f64)>> = match algorithm {
        KnnAlgorithm::VpTree => {
            let tree = VpTree::build(x);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    tree.query(x, i, k)
                        .into_iter()
                        .map(|(d, j)| (j, d))
                        .collect()
                })
                .collect()
        }
        _ => (0..n)
            .into_par_iter()
            .map(|i| brute_force(x, i, k))
            .collect(),
    };
    NeighborGraph::from_lists(lists, k, true)
}

fn brute_force(x: &DataMatrix, i: usize, k: usize) -> Vec<(usize, f64)> {
    let q = x.row(i);
    let mut cand: Vec<(f64, usize)> = (0..x.n())
        .filter(|&j| j != i)
        .map(|j| (crate::data::sq_dist(q, x.row(j)), j))
        .collect();
    cand.select_nth_unstable_by(k - 1, cmp_candidate);
    cand.truncate(k);
    cand.into_iter().map(|(d, j)| (j, d)).collect()
}
