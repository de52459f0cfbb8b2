use std::collections::BinaryHeap;

use crate::data::{sq_dist, DataMatrix};

use super::cmp_candidate;

const LEAF_SIZE: usize = 8;

/// Relative slack on the triangle-inequality pruning bounds. Pruning is
/// done on square-rooted distances, so a little rounding headroom keeps
/// tied candidates from being skipped.
const PRUNE_SLACK: f64 = 1e-9;

enum Node {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        /// Median distance from the vantage point.
        radius: f64,
        inside: usize,
        outside: usize,
    },
}

/// Vantage-point tree for exact Euclidean kNN queries.
pub struct VpTree {
    nodes: Vec<Node>,
    root: usize,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        cmp_candidate(&(self.0, self.1), &(other.0, other.1))
    }
}

impl VpTree {
    pub fn build(x: &DataMatrix) -> Self {
        let mut nodes = Vec::new();
        let mut items: Vec<usize> = (0..x.n()).collect();
        let root = Self::build_node(x, &mut items, &mut nodes);
        Self { nodes, root }
    }

    fn build_node(x: &DataMatrix, items: &mut [usize], nodes: &mut Vec<Node>) -> usize {
        if items.len() <= LEAF_SIZE {
            nodes.push(Node::Leaf(items.to_vec()));
            return nodes.len() - 1;
        }
        // Vantage point: the item farthest from the middle item, which tends
        // to sit near the boundary of the set. Deterministic.
        let mid = items[items.len() / 2];
        let far = (0..items.len())
            .max_by(|&a, &b| {
                x.sq_dist(mid, items[a])
                    .total_cmp(&x.sq_dist(mid, items[b]))
                    .then(items[b].cmp(&items[a]))
            })
            .unwrap();
        items.swap(0, far);
        let vantage = items[0];
        let rest = &mut items[1..];
        let mut keyed: Vec<(f64, usize)> = rest
            .iter()
            .map(|&j| (x.sq_dist(vantage, j).sqrt(), j))
            .collect();
        let m = keyed.len() / 2;
        keyed.select_nth_unstable_by(m, cmp_candidate);
        let radius = keyed[m].0;
        for (slot, (_, j)) in rest.iter_mut().zip(&keyed) {
            *slot = *j;
        }
        let (ins, outs) = rest.split_at_mut(m);
        let inside = Self::build_node(x, ins, nodes);
        let outside = Self::build_node(x, outs, nodes);
        nodes.push(Node::Split {
            vantage,
            radius,
            inside,
            outside,
        });
        nodes.len() - 1
    }

    /// The `k` nearest rows to row `i` (excluding `i`) as `(dist2, index)`,
    /// ordered by distance then index.
    pub fn query(&self, x: &DataMatrix, i: usize, k: usize) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, x, i, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|Cand(d, j)| (d, j)).collect();
        out.sort_by(cmp_candidate);
        out
    }

    fn offer(heap: &mut BinaryHeap<Cand>, k: usize, d: f64, j: usize) {
        if heap.len() < k {
            heap.push(Cand(d, j));
        } else if cmp_candidate(&(d, j), &(heap.peek().unwrap().0, heap.peek().unwrap().1)).is_lt()
        {
            heap.pop();
            heap.push(Cand(d, j));
        }
    }

    fn tau(heap: &BinaryHeap<Cand>, k: usize) -> f64 {
        if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().unwrap().0.sqrt() * (1.0 + PRUNE_SLACK) + PRUNE_SLACK
        }
    }

    fn search(&self, node: usize, x: &DataMatrix, q: usize, k: usize, heap: &mut BinaryHeap<Cand>) {
        match &self.nodes[node] {
            Node::Leaf(items) => {
                for &j in items {
                    if j != q {
                        Self::offer(heap, k, sq_dist(x.row(q), x.row(j)), j);
                    }
                }
            }
            &Node::Split {
                vantage,
                radius,
                inside,
                outside,
            } => {
                let d2 = sq_dist(x.row(q), x.row(vantage));
                if vantage != q {
                    Self::offer(heap, k, d2, vantage);
                }
                let d = d2.sqrt();
                if d < radius {
                    self.search(inside, x, q, k, heap);
                    if radius - d <= Self::tau(heap, k) {
                        self.search(outside, x, q, k, heap);
                    }
                } else {
                    self.search(outside, x, q, k, heap);
                    if d - radius <= Self::tau(heap, k) {
                        self.search(inside, x, q, k, heap);
                    }
                }
            }
        }
    }
}
