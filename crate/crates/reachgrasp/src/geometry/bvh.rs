//! Bounding volume hierarchy over mesh triangles.
//!
//! Median-split BVH with a flat node array. Queries are exact: they return
//! the same hits a linear scan over all triangles would, just faster.

use super::mesh::TriMesh;
use super::ray::{closest_point_on_triangle, intersect_triangle, HitRecord, Ray};
use super::vec3::Vec3;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: Vec3) {
        self.lo = self.lo.min_by_component(p);
        self.hi = self.hi.max_by_component(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.min_by_component(o.lo);
        self.hi = self.hi.max_by_component(o.hi);
    }

    /// Slab test over `[0, max_t]`, inclusive of boundary touches.
    fn hit_by(&self, ray: &Ray, max_t: f64) -> bool {
        let mut t0 = 0.0_f64;
        let mut t1 = max_t;
        for axis in 0..3 {
            let (o, d, lo, hi) = match axis {
                0 => (ray.origin.x, ray.direction.x, self.lo.x, self.hi.x),
                1 => (ray.origin.y, ray.direction.y, self.lo.y, self.hi.y),
                _ => (ray.origin.z, ray.direction.z, self.lo.z, self.hi.z),
            };
            if d.abs() < 1e-300 {
                if o < lo || o > hi {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((lo - o) * inv, (hi - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    /// Squared distance from `p` to this box (0 inside).
    fn distance_sq(&self, p: Vec3) -> f64 {
        let dx = (self.lo.x - p.x).max(0.0).max(p.x - self.hi.x);
        let dy = (self.lo.y - p.y).max(0.0).max(p.y - self.hi.y);
        let dz = (self.lo.z - p.z).max(0.0).max(p.z - self.hi.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    /// Index of the left child; the right child is `left + 1` in `nodes`.
    left: u32,
    /// First triangle slot in `order` for a leaf.
    start: u32,
    /// Number of triangles in a leaf; 0 marks an interior node.
    count: u32,
}

/// Spatial acceleration index over one mesh's triangles.
#[derive(Debug, Clone)]
pub struct AccelIndex {
    nodes: Vec<Node>,
    /// Triangle indices, partitioned so each leaf owns a contiguous run.
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl AccelIndex {
    pub fn build(mesh: &TriMesh) -> AccelIndex {
        let n = mesh.triangles.len();
        let mut centroids = Vec::with_capacity(n);
        let mut boxes = Vec::with_capacity(n);
        for i in 0..n {
            let [a, b, c] = mesh.triangle(i);
            let mut bb = Aabb::empty();
            bb.grow(a);
            bb.grow(b);
            bb.grow(c);
            boxes.push(bb);
            centroids.push((a + b + c) / 3.0);
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        nodes.push(Node {
            aabb: Aabb::empty(),
            left: 0,
            start: 0,
            count: 0,
        });
        Self::build_node(0, &mut nodes, &mut order, 0, n, &boxes, &centroids);
        AccelIndex { nodes, order }
    }

    fn build_node(
        node_idx: usize,
        nodes: &mut Vec<Node>,
        order: &mut [u32],
        start: usize,
        end: usize,
        boxes: &[Aabb],
        centroids: &[Vec3],
    ) {
        let mut aabb = Aabb::empty();
        for &t in &order[start..end] {
            aabb.merge(&boxes[t as usize]);
        }
        let count = end - start;
        if count <= LEAF_SIZE {
            nodes[node_idx] = Node {
                aabb,
                left: 0,
                start: start as u32,
                count: count as u32,
            };
            return;
        }
        // Split at the median centroid along the widest axis.
        let extent = aabb.hi - aabb.lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let key = |t: u32| -> f64 {
            let c = centroids[t as usize];
            match axis {
                0 => c.x,
                1 => c.y,
                _ => c.z,
            }
        };
        let mid = start + count / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
        });
        let left = nodes.len() as u32;
        nodes.push(Node {
            aabb: Aabb::empty(),
            left: 0,
            start: 0,
            count: 0,
        });
        nodes.push(Node {
            aabb: Aabb::empty(),
            left: 0,
            start: 0,
            count: 0,
        });
        nodes[node_idx] = Node {
            aabb,
            left,
            start: 0,
            count: 0,
        };
        Self::build_node(left as usize, nodes, order, start, mid, boxes, centroids);
        Self::build_node(left as usize + 1, nodes, order, mid, end, boxes, centroids);
    }

    /// Nearest hit along the ray, if any.
    pub fn first_hit(&self, mesh: &TriMesh, ray: &Ray) -> Option<HitRecord> {
        let mut best: Option<HitRecord> = None;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            let limit = best.map_or(ray.max_distance, |h| h.distance);
            if !node.aabb.hit_by(ray, limit) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    if let Some(hit) = intersect_triangle(ray, a, b, c, t) {
                        if best.is_none_or(|cur| hit.distance < cur.distance) {
                            best = Some(hit);
                        }
                    }
                }
            } else {
                stack.push(node.left as usize);
                stack.push(node.left as usize + 1);
            }
        }
        best
    }

    /// All hits along the ray, sorted by distance.
    pub fn all_hits(&self, mesh: &TriMesh, ray: &Ray) -> Vec<HitRecord> {
        let mut hits = Vec::new();
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if !node.aabb.hit_by(ray, ray.max_distance) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    if let Some(hit) = intersect_triangle(ray, a, b, c, t) {
                        hits.push(hit);
                    }
                }
            } else {
                stack.push(node.left as usize);
                stack.push(node.left as usize + 1);
            }
        }
        hits.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap()
                .then(a.triangle_index.cmp(&b.triangle_index))
        });
        hits
    }

    /// Closest point on the mesh surface to `p`, with its triangle index.
    pub fn closest_point(&self, mesh: &TriMesh, p: Vec3) -> (Vec3, u32) {
        let mut best_d2 = f64::INFINITY;
        let mut best = (Vec3::default(), 0u32);
        // Depth-first with box-distance pruning; visit nearer child first.
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.aabb.distance_sq(p) >= best_d2 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(t as usize);
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d2 = (q - p).norm_sq();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = (q, t);
                    }
                }
            } else {
                let l = node.left as usize;
                let dl = self.nodes[l].aabb.distance_sq(p);
                let dr = self.nodes[l + 1].aabb.distance_sq(p);
                if dl < dr {
                    stack.push(l + 1);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(l + 1);
                }
            }
        }
        best
    }
}
