//! Exact Chebyshev-metric neighbor queries.
//!
//! A kd-tree with per-node bounding boxes answers k-th-neighbor distances
//! and ball counts; below [`BRUTE_FORCE_BELOW`] points a linear scan is used
//! instead. Both paths compute coordinate differences the same way, so
//! counts agree exactly with a brute-force scan, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SampleBlock;
use crate::scalar::Scalar;

pub const BRUTE_FORCE_BELOW: usize = 256;
const LEAF_SIZE: usize = 32;
const NONE: u32 = u32::MAX;

#[inline]
pub(crate) fn chebyshev<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&p, &q)| acc.max((p - q).abs()))
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Entry<T> {
    dist: T,
    id: usize,
}

impl<T: PartialEq> Eq for Entry<T> {}

impl<T: PartialOrd> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }
}

#[derive(Clone, Debug)]
struct Node {
    start: usize,
    end: usize,
    left: u32,
    right: u32,
}

/// Neighbor index over the rows of a [`SampleBlock`].
#[derive(Clone, Debug)]
pub struct NeighborIndex<T> {
    dim: usize,
    /// Points in tree order.
    points: Vec<T>,
    /// Original row index of each point in tree order.
    ids: Vec<usize>,
    nodes: Vec<Node>,
    /// `lo` then `hi` corners, `2 * dim` values per node.
    boxes: Vec<T>,
}

impl<T: Scalar> NeighborIndex<T> {
    pub fn build(block: &SampleBlock<T>) -> Self {
        let (n, dim) = (block.n(), block.dim());
        let mut order: Vec<usize> = (0..n).collect();
        let mut index = Self {
            dim,
            points: Vec::new(),
            ids: Vec::new(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if n >= BRUTE_FORCE_BELOW {
            index.build_node(block, &mut order, 0, n);
        }
        index.points = order.iter().flat_map(|&i| block.row(i).iter().copied()).collect();
        index.ids = order;
        index
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn is_brute(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    fn point(&self, slot: usize) -> &[T] {
        &self.points[slot * self.dim..(slot + 1) * self.dim]
    }

    fn build_node(&mut self, block: &SampleBlock<T>, order: &mut [usize], start: usize, end: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            left: NONE,
            right: NONE,
        });
        let dim = self.dim;
        let mut lo = block.row(order[start]).to_vec();
        let mut hi = lo.clone();
        for &i in &order[start + 1..end] {
            for (j, &v) in block.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let (split, extent) = (0..dim)
            .map(|j| (j, hi[j] - lo[j]))
            .fold((0, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE || extent == T::zero() {
            return id as u32;
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            block.row(a)[split]
                .partial_cmp(&block.row(b)[split])
                .unwrap_or(Ordering::Equal)
        });
        let left = self.build_node(block, order, start, mid);
        let right = self.build_node(block, order, mid, end);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id as u32
    }

    #[inline]
    fn bounds(&self, node: usize) -> (&[T], &[T]) {
        let base = node * 2 * self.dim;
        (
            &self.boxes[base..base + self.dim],
            &self.boxes[base + self.dim..base + 2 * self.dim],
        )
    }

    /// Smallest possible distance from `q` to any point in the node's box.
    #[inline]
    fn box_min_dist(&self, node: usize, q: &[T]) -> T {
        let (lo, hi) = self.bounds(node);
        let mut d = T::zero();
        for j in 0..self.dim {
            d = d.max(lo[j] - q[j]).max(q[j] - hi[j]);
        }
        d
    }

    /// Largest possible distance from `q` to any point in the node's box.
    #[inline]
    fn box_max_dist(&self, node: usize, q: &[T]) -> T {
        let (lo, hi) = self.bounds(node);
        let mut d = T::zero();
        for j in 0..self.dim {
            d = d.max(hi[j] - q[j]).max(q[j] - lo[j]);
        }
        d
    }

    /// Distance from `q` to its k-th nearest point, skipping original row `exclude`.
    pub fn kth_distance(&self, q: &[T], k: usize, exclude: Option<usize>) -> T {
        debug_assert!(k >= 1);
        if self.is_brute() {
            let mut buf: Vec<T> = (0..self.len())
                .filter(|&slot| Some(self.ids[slot]) != exclude)
                .map(|slot| chebyshev(q, self.point(slot)))
                .collect();
            if buf.len() < k {
                return T::infinity();
            }
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            return *kth;
        }
        let mut heap: BinaryHeap<Entry<T>> = BinaryHeap::with_capacity(k + 1);
        self.kth_recurse(0, q, k, exclude, &mut heap);
        heap.peek().map(|e| e.dist).unwrap_or_else(T::infinity)
    }

    fn kth_recurse(&self, node: usize, q: &[T], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Entry<T>>) {
        let nd = &self.nodes[node];
        if nd.left == NONE {
            for slot in nd.start..nd.end {
                if Some(self.ids[slot]) == exclude {
                    continue;
                }
                push_bounded(heap, k, chebyshev(q, self.point(slot)), 0);
            }
            return;
        }
        let (l, r) = (nd.left as usize, nd.right as usize);
        let (dl, dr) = (self.box_min_dist(l, q), self.box_min_dist(r, q));
        let order = if dl <= dr { [(l, dl), (r, dr)] } else { [(r, dr), (l, dl)] };
        for (child, d) in order {
            if heap.len() == k && d >= heap.peek().unwrap().dist {
                continue;
            }
            self.kth_recurse(child, q, k, exclude, heap);
        }
    }

    /// Distance from every indexed row to its k-th nearest other row, by row index.
    ///
    /// Rows are visited in tree order, so consecutive queries are spatial
    /// neighbors and the previous radius is a good first guess: all points
    /// inside a slightly enlarged ball are gathered and the k-th smallest
    /// distance is selected exactly. A guess that gathers too few or too many
    /// points falls back to the best-first search.
    pub fn all_kth_distances(&self, k: usize) -> Vec<T> {
        let n = self.len();
        let mut out = vec![T::zero(); n];
        if self.is_brute() {
            for slot in 0..n {
                out[self.ids[slot]] = self.kth_distance(self.point(slot), k, Some(self.ids[slot]));
            }
            return out;
        }
        let cap = 16 * k + 64;
        let grow = T::lit(1.1);
        let mut buf: Vec<T> = Vec::with_capacity(cap);
        let mut prev = T::zero();
        for slot in 0..n {
            let q = self.point(slot);
            let id = self.ids[slot];
            let mut found = None;
            let mut radius = prev * grow;
            for _ in 0..3 {
                if radius <= T::zero() {
                    break;
                }
                buf.clear();
                if !self.gather(0, q, radius, slot, cap, &mut buf) {
                    break;
                }
                if buf.len() >= k {
                    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| {
                        a.partial_cmp(b).unwrap_or(Ordering::Equal)
                    });
                    found = Some(*kth);
                    break;
                }
                radius = radius * grow;
            }
            let r = found.unwrap_or_else(|| self.kth_distance(q, k, Some(id)));
            out[id] = r;
            prev = r;
        }
        out
    }

    /// Pushes distances `<= radius` from `q`, skipping tree slot `skip`.
    /// Returns false once more than `cap` points have been gathered.
    fn gather(&self, node: usize, q: &[T], radius: T, skip: usize, cap: usize, buf: &mut Vec<T>) -> bool {
        if self.box_min_dist(node, q) > radius {
            return true;
        }
        let nd = &self.nodes[node];
        if nd.left == NONE {
            for slot in nd.start..nd.end {
                if slot == skip {
                    continue;
                }
                let d = chebyshev(q, self.point(slot));
                if d <= radius {
                    buf.push(d);
                }
            }
            return buf.len() <= cap;
        }
        self.gather(nd.left as usize, q, radius, skip, cap, buf)
            && self.gather(nd.right as usize, q, radius, skip, cap, buf)
    }

    /// The `k` nearest rows to `q` (the query row itself included when indexed),
    /// ordered by distance then row index.
    pub fn k_nearest(&self, q: &[T], k: usize) -> Vec<(T, usize)> {
        let mut heap: BinaryHeap<Entry<T>> = BinaryHeap::with_capacity(k + 1);
        if self.is_brute() {
            for slot in 0..self.len() {
                push_bounded(&mut heap, k, chebyshev(q, self.point(slot)), self.ids[slot]);
            }
        } else {
            self.nearest_recurse(0, q, k, &mut heap);
        }
        let mut out: Vec<(T, usize)> = heap.into_iter().map(|e| (e.dist, e.id)).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        out
    }

    fn nearest_recurse(&self, node: usize, q: &[T], k: usize, heap: &mut BinaryHeap<Entry<T>>) {
        let nd = &self.nodes[node];
        if nd.left == NONE {
            for slot in nd.start..nd.end {
                push_bounded(heap, k, chebyshev(q, self.point(slot)), self.ids[slot]);
            }
            return;
        }
        let (l, r) = (nd.left as usize, nd.right as usize);
        let (dl, dr) = (self.box_min_dist(l, q), self.box_min_dist(r, q));
        let order = if dl <= dr { [(l, dl), (r, dr)] } else { [(r, dr), (l, dl)] };
        for (child, d) in order {
            // Equal distances may still win on the index tie-break.
            if heap.len() == k && d > heap.peek().unwrap().dist {
                continue;
            }
            self.nearest_recurse(child, q, k, heap);
        }
    }

    /// Number of indexed points within `radius` of `q` (`< radius` when `strict`).
    pub fn count_within(&self, q: &[T], radius: T, strict: bool) -> usize {
        if self.is_brute() {
            return (0..self.len())
                .filter(|&slot| within(chebyshev(q, self.point(slot)), radius, strict))
                .count();
        }
        self.count_recurse(0, q, radius, strict)
    }

    fn count_recurse(&self, node: usize, q: &[T], radius: T, strict: bool) -> usize {
        let min = self.box_min_dist(node, q);
        if !within(min, radius, strict) {
            return 0;
        }
        let nd = &self.nodes[node];
        if within(self.box_max_dist(node, q), radius, strict) {
            return nd.end - nd.start;
        }
        if nd.left == NONE {
            return (nd.start..nd.end)
                .filter(|&slot| within(chebyshev(q, self.point(slot)), radius, strict))
                .count();
        }
        self.count_recurse(nd.left as usize, q, radius, strict)
            + self.count_recurse(nd.right as usize, q, radius, strict)
    }
    /// Row indices of the indexed points within `radius` of `q`, in no particular order.
    pub fn rows_within(&self, q: &[T], radius: T, strict: bool) -> Vec<usize> {
        let mut out = Vec::new();
        if self.is_brute() {
            out.extend(
                (0..self.len())
                    .filter(|&slot| within(chebyshev(q, self.point(slot)), radius, strict))
                    .map(|slot| self.ids[slot]),
            );
        } else {
            self.rows_recurse(0, q, radius, strict, &mut out);
        }
        out
    }

    fn rows_recurse(&self, node: usize, q: &[T], radius: T, strict: bool, out: &mut Vec<usize>) {
        if !within(self.box_min_dist(node, q), radius, strict) {
            return;
        }
        let nd = &self.nodes[node];
        if nd.left == NONE {
            out.extend(
                (nd.start..nd.end)
                    .filter(|&slot| within(chebyshev(q, self.point(slot)), radius, strict))
                    .map(|slot| self.ids[slot]),
            );
            return;
        }
        self.rows_recurse(nd.left as usize, q, radius, strict, out);
        self.rows_recurse(nd.right as usize, q, radius, strict, out);
    }
}

#[inline]
fn within<T: Scalar>(d: T, radius: T, strict: bool) -> bool {
    if strict {
        d < radius
    } else {
        d <= radius
    }
}

#[inline]
fn push_bounded<T: Scalar>(heap: &mut BinaryHeap<Entry<T>>, k: usize, dist: T, id: usize) {
    let e = Entry { dist, id };
    if heap.len() < k {
        heap.push(e);
    } else if let Some(mut top) = heap.peek_mut() {
        if e < *top {
            *top = e;
        }
    }
}
