//! Exact max-norm k-d tree for nearest-neighbor distances and range counts.

const LEAF: usize = 16;

struct Node {
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

pub struct KdTree {
    dim: usize,
    /// Points reordered so every node owns a contiguous range.
    pts: Vec<f64>,
    nodes: Vec<Node>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl KdTree {
    /// `data` is row-major, `data.len() / dim` points.
    pub fn new(data: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        let n = data.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut tree = KdTree {
            dim,
            pts: Vec::new(),
            nodes: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
        };
        if n > 0 {
            tree.build(data, &mut order, 0, n);
        }
        tree.pts = order.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied()).collect();
        tree
    }

    fn build(&mut self, data: &[f64], order: &mut [usize], start: usize, end: usize) -> usize {
        let d = self.dim;
        let id = self.nodes.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &order[start..end] {
            for j in 0..d {
                let v = data[i * d + j];
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        self.nodes.push(Node { start, end, children: None });
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        if end - start <= LEAF {
            return id;
        }
        let split = (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| data[a * d + split].total_cmp(&data[b * d + split]));
        let left = self.build(data, order, start, mid);
        let right = self.build(data, order, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    fn min_dist(&self, node: usize, q: &[f64]) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for j in 0..d {
            let (l, h) = (self.lo[node * d + j], self.hi[node * d + j]);
            m = m.max(l - q[j]).max(q[j] - h);
        }
        m
    }

    fn max_dist(&self, node: usize, q: &[f64]) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for j in 0..d {
            let (l, h) = (self.lo[node * d + j], self.hi[node * d + j]);
            m = m.max((q[j] - l).abs()).max((h - q[j]).abs());
        }
        m
    }

    /// Distance from `q` to its `k`-th nearest stored point (the query point
    /// itself counts if it is stored).
    pub fn kth_distance(&self, q: &[f64], k: usize) -> f64 {
        assert!(k >= 1);
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        if !self.nodes.is_empty() {
            self.knn(0, q, k, &mut best);
        }
        best.get(k - 1).copied().unwrap_or(f64::INFINITY)
    }

    fn knn(&self, node: usize, q: &[f64], k: usize, best: &mut Vec<f64>) {
        if best.len() == k && self.min_dist(node, q) >= best[k - 1] {
            return;
        }
        let n = &self.nodes[node];
        match n.children {
            None => {
                for i in n.start..n.end {
                    let p = self.point(i);
                    let dist = p.iter().zip(q).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                    if best.len() < k || dist < best[k - 1] {
                        let pos = best.partition_point(|&x| x <= dist);
                        best.insert(pos, dist);
                        best.truncate(k);
                    }
                }
            }
            Some((l, r)) => {
                let (first, second) = if self.min_dist(l, q) <= self.min_dist(r, q) { (l, r) } else { (r, l) };
                self.knn(first, q, k, best);
                self.knn(second, q, k, best);
            }
        }
    }

    /// Number of stored points strictly closer than `r` to `q`.
    pub fn count_within(&self, q: &[f64], r: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        self.count(0, q, r)
    }

    fn count(&self, node: usize, q: &[f64], r: f64) -> usize {
        if self.min_dist(node, q) >= r {
            return 0;
        }
        let n = &self.nodes[node];
        if self.max_dist(node, q) < r {
            return n.end - n.start;
        }
        match n.children {
            None => (n.start..n.end)
                .filter(|&i| self.point(i).iter().zip(q).all(|(a, b)| (a - b).abs() < r))
                .count(),
            Some((l, rr)) => self.count(l, q, r) + self.count(rr, q, r),
        }
    }
}
