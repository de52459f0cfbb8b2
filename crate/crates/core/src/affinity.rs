//! Symmetric affinities `v_ij` and their normalized form `p_ij`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::NeighborGraph;

/// Bracket for the per-point bandwidth search.
pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;
pub const MAX_BISECTION_STEPS: usize = 200;
/// Absolute tolerance on the achieved perplexity `2^H`.
pub const PERPLEXITY_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityKind {
    GaussianPerplexity,
    BinaryKnn,
}

impl fmt::Display for AffinityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AffinityKind::GaussianPerplexity => "gaussian-perplexity",
            AffinityKind::BinaryKnn => "binary-knn",
        })
    }
}

impl FromStr for AffinityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-perplexity" | "gaussian" => Ok(AffinityKind::GaussianPerplexity),
            "binary-knn" | "binary" => Ok(AffinityKind::BinaryKnn),
            _ => Err(Error::invalid(format!("unknown affinity kind `{s}`"))),
        }
    }
}

/// Sparse symmetric affinity matrix.
///
/// Each unordered pair is stored once (`i < j`); the per-node adjacency
/// refers back into that list, so `v_ij == v_ji` holds by construction.
#[derive(Clone, Debug)]
pub struct AffinityGraph {
    n: usize,
    kind: AffinityKind,
    pairs: Vec<(usize, usize, f64)>,
    offsets: Vec<usize>,
    adjacency: Vec<(usize, usize)>,
    total_mass: f64,
    sigmas: Option<Vec<f64>>,
    flagged: Vec<bool>,
}

impl AffinityGraph {
    /// Builds a graph from unordered pairs. Pairs may be given in either
    /// orientation but each pair at most once; zero weights are dropped.
    pub fn from_pairs(
        n: usize,
        kind: AffinityKind,
        pairs: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut canon: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in pairs {
            if i == j {
                return Err(Error::invalid(format!("self affinity at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "pair ({i}, {j}) out of range for n = {n}"
                )));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "affinity {v} on pair ({i}, {j}) is not a nonnegative number"
                )));
            }
            if v > 0.0 {
                canon.push((i.min(j), i.max(j), v));
            }
        }
        canon.sort_by_key(|&(i, j, _)| (i, j));
        if canon
            .windows(2)
            .any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::invalid("pair listed twice"));
        }

        let mut degree = vec![0usize; n + 1];
        for &(i, j, _) in &canon {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for d in degree.iter().take(n) {
            offsets.push(acc);
            acc += d;
        }
        offsets.push(acc);
        let mut fill = offsets.clone();
        let mut adjacency = vec![(0, 0); acc];
        for (e, &(i, j, _)) in canon.iter().enumerate() {
            adjacency[fill[i]] = (j, e);
            fill[i] += 1;
            adjacency[fill[j]] = (i, e);
            fill[j] += 1;
        }
        for i in 0..n {
            adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        let total_mass = 2.0 * canon.iter().map(|p| p.2).sum::<f64>();
        Ok(Self {
            n,
            kind,
            pairs: canon,
            offsets,
            adjacency,
            total_mass,
            sigmas: None,
            flagged: vec![false; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> AffinityKind {
        self.kind
    }

    /// `sum_ij v_ij` over ordered pairs (each edge counted twice).
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Unordered pairs `(i, j, v_ij)` with `i < j`.
    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Neighbors of `i` with their affinity, sorted by neighbor index.
    pub fn row(&self, i: usize) -> impl ExactSizeIterator<Item = (usize, f64)> + '_ {
        self.adjacency[self.offsets[i]..self.offsets[i + 1]]
            .iter()
            .map(move |&(j, e)| (j, self.pairs[e].2))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Weighted degree `D_ii = sum_j v_ij`.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.adjacency[self.offsets[i]..self.offsets[i + 1]];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.pairs[row[k].1].2,
            Err(_) => 0.0,
        }
    }

    pub fn sigmas(&self) -> Option<&[f64]> {
        self.sigmas.as_deref()
    }

    /// Points whose bandwidth search could not hit the target perplexity.
    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }

    /// Divisor turning `v_ij` into `p_ij`: `n` for perplexity affinities,
    /// the total mass for binary ones.
    pub fn normalizer(&self) -> f64 {
        match self.kind {
            AffinityKind::GaussianPerplexity => self.n as f64,
            AffinityKind::BinaryKnn => self.total_mass,
        }
    }

    /// `p_ij` over ordered pairs (both orientations), summing to one.
    pub fn normalized_view(&self) -> Vec<(usize, usize, f64)> {
        let z = self.normalizer();
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v / z)))
            .collect()
    }

    /// Dense `n x n` matrix of `v_ij`. Intended for small graphs.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for &(i, j, v) in &self.pairs {
            m[i][j] = v;
            m[j][i] = v;
        }
        m
    }

    /// Writes the header `n kind total_mass` and one `i j v` line per pair.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{} {} {:?}", self.n, self.kind, self.total_mass)?;
        for &(i, j, v) in &self.pairs {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let bad_header = || Error::parse(path, "line 1", "expected header `n kind total_mass`");
        let header = lines.next().ok_or_else(bad_header)?.1?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(bad_header());
        }
        let n: usize = h[0].parse().map_err(|_| bad_header())?;
        let kind: AffinityKind = h[1].parse().map_err(|_| bad_header())?;
        let mut pairs = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
                .flatten();
            pairs.push(parsed.ok_or_else(|| {
                Error::parse(path, format!("line {}", lineno + 1), "expected `i j v`")
            })?);
        }
        Self::from_pairs(n, kind, pairs)
    }
}

/// Outcome of one point's bandwidth search.
#[derive(Clone, Debug)]
pub struct RowCalibration {
    pub sigma: f64,
    /// `p_{j|i}` for the point's neighbors, in the neighbor-list order.
    pub probs: Vec<f64>,
    /// `2^H` achieved at `sigma`.
    pub perplexity: f64,
    pub flagged: bool,
}

/// Conditional Gaussian probabilities for one point given its squared
/// neighbor distances, with `sigma` chosen by bisection so that `2^H` hits
/// the target perplexity.
pub fn calibrate_row(sq_dists: &[f64], perplexity: f64) -> RowCalibration {
    assert!(!sq_dists.is_empty());
    // Shifting by the nearest distance leaves p_{j|i} unchanged and keeps the
    // largest kernel value at exactly 1.
    let dmin = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_dists.iter().map(|d| d - dmin).collect();
    let eval = |log_sigma: f64| -> (f64, f64) {
        let beta = 0.5 * (-2.0 * log_sigma).exp();
        let mut s = 0.0;
        let mut sd = 0.0;
        for &d in &shifted {
            let e = (-beta * d).exp();
            s += e;
            sd += d * e;
        }
        // Entropy in nats.
        let h = if sd == 0.0 {
            s.ln()
        } else {
            s.ln() + beta * sd / s
        };
        (h, h.exp())
    };

    let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    // Entropies at the bracket ends; every midpoint must fall between them.
    let (mut h_lo, mut h_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut converged = false;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (h, perp) = eval(mid);
        debug_assert!(
            h >= h_lo - 1e-9 && h <= h_hi + 1e-9,
            "entropy must be nondecreasing in sigma"
        );
        let err = (perp - perplexity).abs();
        if err < best.0 {
            best = (err, mid, perp);
        }
        if err <= PERPLEXITY_TOL {
            converged = true;
            break;
        }
        if perp > perplexity {
            hi = mid;
            h_hi = h;
        } else {
            lo = mid;
            h_lo = h;
        }
    }
    let (_, log_sigma, perp) = best;
    let beta = 0.5 * (-2.0 * log_sigma).exp();
    let e: Vec<f64> = shifted.iter().map(|d| (-beta * d).exp()).collect();
    let s: f64 = e.iter().sum();
    RowCalibration {
        sigma: log_sigma.exp(),
        probs: e.into_iter().map(|v| v / s).collect(),
        perplexity: perp,
        flagged: !converged,
    }
}

/// Per-point conditionals `p_{j|i}` over a directed kNN graph.
#[derive(Clone, Debug)]
pub struct Conditionals {
    pub rows: Vec<RowCalibration>,
}

pub fn conditional_probabilities(g: &NeighborGraph, perplexity: f64) -> Result<Conditionals> {
    if !g.is_directed() {
        return Err(Error::invalid(
            "perplexity calibration expects a directed kNN graph",
        ));
    }
    if !(perplexity > 1.0 && perplexity.is_finite()) {
        return Err(Error::invalid(format!(
            "perplexity must be > 1, got {perplexity}"
        )));
    }
    let need = perplexity.ceil() as usize;
    if let Some(i) = (0..g.n()).find(|&i| g.neighbors(i).len() < need) {
        return Err(Error::invalid(format!(
            "node {i} has {} neighbors, perplexity {perplexity} needs at least {need}",
            g.neighbors(i).len()
        )));
    }
    let rows = (0..g.n())
        .into_par_iter()
        .map(|i| calibrate_row(g.dists(i), perplexity))
        .collect();
    Ok(Conditionals { rows })
}

/// Gaussian affinities `v_ij = (p_{j|i} + p_{i|j}) / 2` with per-point
/// bandwidths calibrated to the given perplexity.
pub fn perplexity_calibrate(g: &NeighborGraph, perplexity: f64) -> Result<AffinityGraph> {
    let cond = conditional_probabilities(g, perplexity)?;
    let mut halves: Vec<(usize, usize, f64)> = Vec::with_capacity(g.entries().count());
    for i in 0..g.n() {
        for (&j, &p) in g.neighbors(i).iter().zip(&cond.rows[i].probs) {
            halves.push((i.min(j), i.max(j), 0.5 * p));
        }
    }
    halves.sort_by_key(|&(i, j, _)| (i, j));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(halves.len());
    for (i, j, v) in halves {
        match merged.last_mut() {
            Some(last) if (last.0, last.1) == (i, j) => last.2 += v,
            _ => merged.push((i, j, v)),
        }
    }
    let flagged: Vec<bool> = cond.rows.iter().map(|r| r.flagged).collect();
    let n_flagged = flagged.iter().filter(|&&f| f).count();
    if n_flagged > 0 {
        log::warn!(
            "perplexity calibration: {n_flagged} point(s) did not reach perplexity {perplexity}"
        );
    }
    let mut a = AffinityGraph::from_pairs(g.n(), AffinityKind::GaussianPerplexity, merged)?;
    a.sigmas = Some(cond.rows.iter().map(|r| r.sigma).collect());
    a.flagged = flagged;
    Ok(a)
}

/// Binary affinities: `v_ij = 1` on every edge of an undirected graph.
pub fn binary_affinities(g: &NeighborGraph) -> Result<AffinityGraph> {
    if g.is_directed() {
        return Err(Error::invalid(
            "binary affinities expect a symmetrized graph",
        ));
    }
    if g.n_edges() == 0 {
        return Err(Error::invalid("graph has no edges"));
    }
    let pairs = g
        .entries()
        .filter(|&(i, j, _)| i < j)
        .map(|(i, j, _)| (i, j, 1.0));
    AffinityGraph::from_pairs(g.n(), AffinityKind::BinaryKnn, pairs)
}
