//! Static kd-tree over a subset of the covariate rows.
//!
//! Sets smaller than [`BRUTE_FORCE_BELOW`] become a single leaf, which makes
//! every query an exhaustive scan.

/// Below this many points the index is one flat bucket.
pub const BRUTE_FORCE_BELOW: usize = 256;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable nearest-neighbor and radius index. Shareable across threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    k: usize,
    points: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

/// Squared Euclidean distance, accumulated in coordinate order.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (u, v) in a.iter().zip(b) {
        let t = u - v;
        acc += t * t;
    }
    acc
}

impl SpatialIndex {
    /// Indexes the rows `ids` of the row-major matrix `x` with `k` columns.
    pub fn build(x: &[f64], k: usize, ids: &[usize]) -> Self {
        let mut slots: Vec<usize> = ids.to_vec();
        let mut index = SpatialIndex {
            k,
            points: Vec::new(),
            ids: Vec::new(),
            nodes: Vec::new(),
        };
        if slots.len() < BRUTE_FORCE_BELOW {
            index.nodes.push(Node::Leaf {
                start: 0,
                end: slots.len(),
            });
        } else {
            index.split(x, &mut slots, 0);
        }
        index.points = slots
            .iter()
            .flat_map(|&i| x[i * k..(i + 1) * k].iter().copied())
            .collect();
        index.ids = slots;
        index
    }

    fn split(&mut self, x: &[f64], slots: &mut [usize], offset: usize) -> usize {
        let k = self.k;
        let node = self.nodes.len();
        if slots.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: offset,
                end: offset + slots.len(),
            });
            return node;
        }
        let mut dim = 0;
        let mut widest = -1.0;
        for j in 0..k {
            let (lo, hi) = slots.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = x[i * k + j];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > widest {
                widest = hi - lo;
                dim = j;
            }
        }
        let mid = slots.len() / 2;
        slots.select_nth_unstable_by(mid, |&a, &b| x[a * k + dim].total_cmp(&x[b * k + dim]).then(a.cmp(&b)));
        let value = x[slots[mid] * k + dim];
        self.nodes.push(Node::Split {
            dim,
            value,
            left: 0,
            right: 0,
        });
        let (lo, hi) = slots.split_at_mut(mid);
        let left = self.split(x, lo, offset);
        let right = self.split(x, hi, offset + mid);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[node] {
            *l = left;
            *r = right;
        }
        node
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Nearest indexed row to `q` as `(row id, squared distance)`.
    /// Equidistant candidates resolve to the lowest row id.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, q, &mut best);
        Some(best)
    }

    fn nearest_in(&self, node: usize, q: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for s in start..end {
                    let d2 = dist2(q, &self.points[s * self.k..(s + 1) * self.k]);
                    let id = self.ids[s];
                    if d2 < best.1 || (d2 == best.1 && id < best.0) {
                        *best = (id, d2);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// All indexed rows within distance `radius` of `q` (inclusive), as
    /// `(row id, squared distance)` sorted by row id.
    pub fn within(&self, q: &[f64], radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.within_in(0, q, radius * radius, &mut out);
        }
        out.sort_unstable_by_key(|&(id, _)| id);
        out
    }

    fn within_in(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for s in start..end {
                    let d2 = dist2(q, &self.points[s * self.k..(s + 1) * self.k]);
                    if d2 <= r2 {
                        out.push((self.ids[s], d2));
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_in(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_in(far, q, r2, out);
                }
            }
        }
    }
}
