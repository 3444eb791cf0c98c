//! Metric-conforming remeshing: iterative edge splits, collapses, flips and
//! metric-weighted smoothing until most edges have unit metric length.
//!
//! The boundary polygon is preserved exactly: corner vertices never move,
//! boundary vertices only slide along (or are inserted on) their straight
//! labelled segment, and collapses across label transitions are rejected.
//! Processing order is fully deterministic.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, TriMesh};
use crate::metric::MetricTensorField;

#[derive(Debug, Clone, Copy)]
pub struct AdaptParams {
    pub split_threshold: f64,
    pub collapse_threshold: f64,
    pub max_passes: usize,
    /// Metric-space shape quality below which edge flips are attempted.
    pub quality_floor: f64,
    /// Snap distance for boundary point location (consumed by field transfer).
    pub boundary_tolerance: f64,
}

impl Default for AdaptParams {
    fn default() -> Self {
        Self {
            split_threshold: std::f64::consts::SQRT_2,
            collapse_threshold: 1.0 / std::f64::consts::SQRT_2,
            max_passes: 20,
            quality_floor: 0.6,
            boundary_tolerance: 1e-8,
        }
    }
}

impl AdaptParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.collapse_threshold < 1.0 && 1.0 < self.split_threshold) {
            return Err(Error::Parameter(
                "thresholds must satisfy collapse < 1 < split".into(),
            ));
        }
        if self.max_passes == 0 {
            return Err(Error::Parameter("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Length of edge (a, b) in the averaged endpoint metric.
pub fn metric_edge_length(metric: &MetricTensorField, mesh: &TriMesh, a: usize, b: usize) -> f64 {
    let e = mesh.vertex(b) - mesh.vertex(a);
    let m = 0.5 * (metric.tensors[a] + metric.tensors[b]);
    (m * e).dot(&e).max(0.0).sqrt()
}

/// Outcome of an adaptation call.
#[derive(Debug)]
pub struct AdaptResult {
    pub mesh: TriMesh,
    /// Per-vertex metric carried over to the new mesh.
    pub metric: MetricTensorField,
    /// Fraction of edges with metric length inside the admissible band.
    pub conformity: f64,
    /// Set when the 90% conformity target was not reached.
    pub warning: bool,
    pub passes: usize,
}

pub fn adapt_mesh(
    mesh: &TriMesh,
    metric: &MetricTensorField,
    params: &AdaptParams,
) -> Result<AdaptResult> {
    params.validate()?;
    metric.validate().map_err(|e| {
        Error::Parameter(format!("metric must be SPD at every vertex: {e}"))
    })?;
    let mut w = Working::from_mesh(mesh, metric);
    let mut passes = 0;
    for _ in 0..params.max_passes {
        passes += 1;
        let mut ops = 0;
        ops += w.split_phase(params);
        ops += w.collapse_phase(params);
        ops += w.flip_phase(params);
        ops += w.smooth_phase();
        if ops == 0 {
            break;
        }
    }
    let (mesh, metric) = w.into_mesh()?;
    let edges = mesh.edges();
    let inside = edges
        .iter()
        .filter(|&&(a, b)| {
            let l = metric_edge_length(&metric, &mesh, a, b);
            l >= params.collapse_threshold && l <= params.split_threshold
        })
        .count();
    let conformity = inside as f64 / edges.len().max(1) as f64;
    Ok(AdaptResult {
        mesh,
        metric,
        conformity,
        warning: conformity < 0.9,
        passes,
    })
}

struct WVert {
    pos: Vector2<f64>,
    metric: Matrix2<f64>,
    label: i32,
    corner: bool,
    alive: bool,
}

struct WTri {
    v: [usize; 3],
    alive: bool,
}

struct Working {
    verts: Vec<WVert>,
    tris: Vec<WTri>,
    vert_tris: Vec<BTreeSet<usize>>,
    boundary: BTreeMap<(usize, usize), i32>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Working {
    fn from_mesh(mesh: &TriMesh, metric: &MetricTensorField) -> Self {
        let verts = (0..mesh.n_vertices())
            .map(|v| WVert {
                pos: mesh.vertex(v),
                metric: metric.tensors[v],
                label: mesh.vertex_label(v),
                corner: mesh.is_corner(v),
                alive: true,
            })
            .collect();
        let tris: Vec<WTri> = mesh
            .triangles()
            .iter()
            .map(|&v| WTri { v, alive: true })
            .collect();
        let mut vert_tris = vec![BTreeSet::new(); mesh.n_vertices()];
        for (t, tri) in tris.iter().enumerate() {
            for &v in &tri.v {
                vert_tris[v].insert(t);
            }
        }
        let boundary = mesh
            .boundary_edges()
            .iter()
            .map(|be| (key(be.vertices[0], be.vertices[1]), be.label))
            .collect();
        Self {
            verts,
            tris,
            vert_tris,
            boundary,
        }
    }

    fn edge_len(&self, a: usize, b: usize) -> f64 {
        let e = self.verts[b].pos - self.verts[a].pos;
        let m = 0.5 * (self.verts[a].metric + self.verts[b].metric);
        (m * e).dot(&e).max(0.0).sqrt()
    }

    fn tri_area(&self, v: &[usize; 3]) -> f64 {
        let (a, b, c) = (self.verts[v[0]].pos, self.verts[v[1]].pos, self.verts[v[2]].pos);
        0.5 * ((b - a).perp(&(c - a)))
    }

    /// Metric-space shape quality, 1 for an element that is equilateral with
    /// unit edges in its averaged vertex metric.
    fn quality(&self, v: &[usize; 3]) -> f64 {
        let m = (self.verts[v[0]].metric + self.verts[v[1]].metric + self.verts[v[2]].metric) / 3.0;
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).max(0.0);
        let area_m = det.sqrt() * self.tri_area(v);
        let mut lsq = 0.0;
        for k in 0..3 {
            let e = self.verts[v[(k + 1) % 3]].pos - self.verts[v[k]].pos;
            lsq += (m * e).dot(&e);
        }
        if lsq <= 0.0 {
            return 0.0;
        }
        4.0 * 3.0f64.sqrt() * area_m / lsq
    }

    fn tris_of_edge(&self, a: usize, b: usize) -> Vec<usize> {
        self.vert_tris[a]
            .intersection(&self.vert_tris[b])
            .copied()
            .collect()
    }

    fn edge_exists(&self, a: usize, b: usize) -> bool {
        self.verts[a].alive && self.verts[b].alive && !self.tris_of_edge(a, b).is_empty()
    }

    fn alive_edges(&self) -> BTreeSet<(usize, usize)> {
        let mut edges = BTreeSet::new();
        for tri in self.tris.iter().filter(|t| t.alive) {
            for k in 0..3 {
                edges.insert(key(tri.v[k], tri.v[(k + 1) % 3]));
            }
        }
        edges
    }

    fn add_tri(&mut self, v: [usize; 3]) {
        let id = self.tris.len();
        self.tris.push(WTri { v, alive: true });
        for &x in &v {
            self.vert_tris[x].insert(id);
        }
    }

    fn remove_tri(&mut self, t: usize) {
        self.tris[t].alive = false;
        let v = self.tris[t].v;
        for &x in &v {
            self.vert_tris[x].remove(&t);
        }
    }

    fn neighbors(&self, v: usize) -> BTreeSet<usize> {
        let mut n = BTreeSet::new();
        for &t in &self.vert_tris[v] {
            for &x in &self.tris[t].v {
                if x != v {
                    n.insert(x);
                }
            }
        }
        n
    }

    // ---- split ----

    fn split_phase(&mut self, params: &AdaptParams) -> usize {
        let mut total = 0;
        // Repeat sweeps so that one pass leaves no over-long edge behind;
        // edges created by the sweep are re-examined immediately.
        for _ in 0..30 {
            let mut candidates: Vec<((usize, usize), f64)> = self
                .alive_edges()
                .into_iter()
                .filter_map(|(a, b)| {
                    let l = self.edge_len(a, b);
                    (l > params.split_threshold).then_some(((a, b), l))
                })
                .collect();
            if candidates.is_empty() {
                break;
            }
            candidates.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            let mut ops = 0;
            for ((a, b), _) in candidates {
                if !self.edge_exists(a, b) {
                    continue;
                }
                if self.edge_len(a, b) > params.split_threshold {
                    self.split_edge(a, b);
                    ops += 1;
                }
            }
            total += ops;
            if ops == 0 {
                break;
            }
        }
        total
    }

    fn split_edge(&mut self, a: usize, b: usize) {
        let mid = 0.5 * (self.verts[a].pos + self.verts[b].pos);
        let metric = 0.5 * (self.verts[a].metric + self.verts[b].metric);
        let blabel = self.boundary.get(&key(a, b)).copied();
        let m = self.verts.len();
        self.verts.push(WVert {
            pos: mid,
            metric,
            label: blabel.unwrap_or(0),
            corner: false,
            alive: true,
        });
        self.vert_tris.push(BTreeSet::new());
        for t in self.tris_of_edge(a, b) {
            let v = self.tris[t].v;
            self.remove_tri(t);
            let mut t1 = v;
            let mut t2 = v;
            for k in 0..3 {
                if t1[k] == b {
                    t1[k] = m;
                }
                if t2[k] == a {
                    t2[k] = m;
                }
            }
            self.add_tri(t1);
            self.add_tri(t2);
        }
        if let Some(label) = blabel {
            self.boundary.remove(&key(a, b));
            self.boundary.insert(key(a, m), label);
            self.boundary.insert(key(m, b), label);
        }
    }

    // ---- collapse ----

    fn collapse_phase(&mut self, params: &AdaptParams) -> usize {
        let mut candidates: Vec<((usize, usize), f64)> = self
            .alive_edges()
            .into_iter()
            .filter_map(|(a, b)| {
                let l = self.edge_len(a, b);
                (l < params.collapse_threshold).then_some(((a, b), l))
            })
            .collect();
        candidates.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then(x.0.cmp(&y.0)));
        let mut ops = 0;
        for ((a, b), _) in candidates {
            if !self.edge_exists(a, b) {
                continue;
            }
            if self.edge_len(a, b) >= params.collapse_threshold {
                continue;
            }
            // Prefer removing the endpoint that is free to go.
            if self.try_collapse(a, b) || self.try_collapse(b, a) {
                ops += 1;
            }
        }
        ops
    }

    /// Collapse edge (a, b) by removing `a` into `b`.
    fn try_collapse(&mut self, a: usize, b: usize) -> bool {
        if self.verts[a].corner {
            return false;
        }
        let a_boundary = self.verts[a].label != 0 || self.is_on_boundary(a);
        if a_boundary && !self.boundary.contains_key(&key(a, b)) {
            return false;
        }
        // Link condition: common neighbours must be exactly the opposite
        // vertices of the triangles sharing (a, b).
        let shared = self.tris_of_edge(a, b);
        let mut opposite = BTreeSet::new();
        for &t in &shared {
            for &x in &self.tris[t].v {
                if x != a && x != b {
                    opposite.insert(x);
                }
            }
        }
        let common: BTreeSet<usize> = self
            .neighbors(a)
            .intersection(&self.neighbors(b))
            .copied()
            .collect();
        if common != opposite {
            return false;
        }
        // Geometric validity of the retargeted triangles.
        let retarget: Vec<usize> = self.vert_tris[a]
            .iter()
            .copied()
            .filter(|t| !shared.contains(t))
            .collect();
        for &t in &retarget {
            let mut v = self.tris[t].v;
            for x in &mut v {
                if *x == a {
                    *x = b;
                }
            }
            let area = self.tri_area(&v);
            let mut lmax_sq = 0.0f64;
            for k in 0..3 {
                let e = self.verts[v[(k + 1) % 3]].pos - self.verts[v[k]].pos;
                lmax_sq = lmax_sq.max(e.norm_squared());
            }
            if !(area > 1e-12 * lmax_sq) {
                return false;
            }
        }
        // Commit.
        for &t in &shared {
            self.remove_tri(t);
        }
        for t in retarget {
            let mut v = self.tris[t].v;
            self.remove_tri(t);
            for x in &mut v {
                if *x == a {
                    *x = b;
                }
            }
            self.add_tri(v);
        }
        if a_boundary {
            let label_ab = self.boundary.remove(&key(a, b)).expect("checked above");
            // The other boundary edge at `a` slides to `b`.
            let other: Vec<(usize, usize)> = self
                .boundary
                .keys()
                .copied()
                .filter(|&(x, y)| x == a || y == a)
                .collect();
            debug_assert!(other.len() <= 1);
            for e in other {
                let label = self.boundary.remove(&e).unwrap();
                debug_assert_eq!(label, label_ab);
                let far = if e.0 == a { e.1 } else { e.0 };
                self.boundary.insert(key(far, b), label);
            }
        }
        self.verts[a].alive = false;
        true
    }

    fn is_on_boundary(&self, v: usize) -> bool {
        self.verts[v].label != 0 || self.verts[v].corner
    }

    // ---- flip ----

    fn flip_phase(&mut self, params: &AdaptParams) -> usize {
        let mut ops = 0;
        let edges: Vec<(usize, usize)> = self.alive_edges().into_iter().collect();
        for (a, b) in edges {
            if !self.edge_exists(a, b) || self.boundary.contains_key(&key(a, b)) {
                continue;
            }
            let ts = self.tris_of_edge(a, b);
            if ts.len() != 2 {
                continue;
            }
            let (t1, t2) = (ts[0], ts[1]);
            let v1 = self.tris[t1].v;
            let v2 = self.tris[t2].v;
            let c = *v1.iter().find(|&&x| x != a && x != b).unwrap();
            let d = *v2.iter().find(|&&x| x != a && x != b).unwrap();
            if c == d || self.edge_exists(c, d) {
                continue;
            }
            let q_before = self.quality(&v1).min(self.quality(&v2));
            if q_before >= params.quality_floor {
                continue;
            }
            // Preserve orientation: in t1, the edge appears as a->b or b->a.
            let (first, second) = if oriented_edge(&v1, a, b) { (a, b) } else { (b, a) };
            let n1 = [first, d, c];
            let n2 = [d, second, c];
            if !(self.tri_area(&n1) > 0.0 && self.tri_area(&n2) > 0.0) {
                continue;
            }
            let q_after = self.quality(&n1).min(self.quality(&n2));
            if q_after > q_before + 1e-12 {
                self.remove_tri(t1);
                self.remove_tri(t2);
                self.add_tri(n1);
                self.add_tri(n2);
                ops += 1;
            }
        }
        ops
    }

    // ---- smoothing ----

    fn smooth_phase(&mut self) -> usize {
        let mut moved = 0;
        for v in 0..self.verts.len() {
            if !self.verts[v].alive || self.is_on_boundary(v) {
                continue;
            }
            let neigh = self.neighbors(v);
            if neigh.is_empty() {
                continue;
            }
            let mut a_sum = Matrix2::zeros();
            let mut b_sum = Vector2::zeros();
            for &n in &neigh {
                let m = 0.5 * (self.verts[v].metric + self.verts[n].metric);
                a_sum += m;
                b_sum += m * self.verts[n].pos;
            }
            let Some(inv) = a_sum.try_inverse() else {
                continue;
            };
            let target = inv * b_sum;
            let old = self.verts[v].pos;
            if (target - old).norm() <= 1e-12 * (1.0 + old.norm()) {
                continue;
            }
            self.verts[v].pos = target;
            let valid = self.vert_tris[v].iter().all(|&t| {
                let vv = self.tris[t].v;
                let area = self.tri_area(&vv);
                let mut lmax_sq = 0.0f64;
                for k in 0..3 {
                    let e = self.verts[vv[(k + 1) % 3]].pos - self.verts[vv[k]].pos;
                    lmax_sq = lmax_sq.max(e.norm_squared());
                }
                area > 1e-12 * lmax_sq
            });
            if valid {
                moved += 1;
            } else {
                self.verts[v].pos = old;
            }
        }
        moved
    }

    // ---- compaction ----

    fn into_mesh(self) -> Result<(TriMesh, MetricTensorField)> {
        let mut remap = vec![usize::MAX; self.verts.len()];
        let mut vertices = Vec::new();
        let mut tensors = Vec::new();
        let mut corner_flags = Vec::new();
        for (i, v) in self.verts.iter().enumerate() {
            if v.alive && !self.vert_tris[i].is_empty() {
                remap[i] = vertices.len();
                vertices.push([v.pos.x, v.pos.y]);
                tensors.push(v.metric);
                corner_flags.push(v.corner);
            }
        }
        let triangles: Vec<[usize; 3]> = self
            .tris
            .iter()
            .filter(|t| t.alive)
            .map(|t| [remap[t.v[0]], remap[t.v[1]], remap[t.v[2]]])
            .collect();
        let boundary_edges: Vec<BoundaryEdge> = self
            .boundary
            .iter()
            .map(|(&(a, b), &label)| BoundaryEdge {
                vertices: [remap[a], remap[b]],
                label,
            })
            .collect();
        let mesh = TriMesh::new(vertices, triangles, boundary_edges, corner_flags)?;
        Ok((mesh, MetricTensorField { tensors }))
    }
}

fn oriented_edge(tri: &[usize; 3], a: usize, b: usize) -> bool {
    (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b)
}
