//! Conforming triangle meshes with boundary labels and the spectral
//! description of each element.
//!
//! Every element is seen as the image of the reference equilateral triangle
//! inscribed in the unit circle under an affine map with Jacobian `M_K`.
//! The polar decomposition `M_K = B_K Z_K` yields the circumscribed-ellipse
//! semi-axes (eigenvalues of `B_K`) and their directions, from which the
//! aspect ratios are derived.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Area of the reference equilateral triangle inscribed in the unit circle.
pub const REF_TRIANGLE_AREA: f64 = 1.299038105676658; // 3*sqrt(3)/4

/// Reference vertices at angles 90, 210 and 330 degrees on the unit circle.
pub const REF_VERTICES: [[f64; 2]; 3] = [
    [0.0, 1.0],
    [-0.8660254037844386, -0.5],
    [0.8660254037844386, -0.5],
];

/// A boundary edge with its segment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    /// Endpoint vertex ids, in triangle orientation order.
    pub vertices: [usize; 2],
    pub label: i32,
}

/// Conforming 2D triangulation with labelled boundary.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    vertex_labels: Vec<i32>,
    corner_flags: Vec<bool>,
    /// Elements incident to each vertex, CSR layout.
    vertex_tri_offsets: Vec<usize>,
    vertex_tris: Vec<usize>,
}

impl TriMesh {
    /// Builds a mesh and verifies conformity: positive areas, every edge
    /// shared by at most two triangles, and the given boundary edges matching
    /// exactly the edges owned by a single triangle.
    ///
    /// `corner_flags` marks vertices that must never move during adaptation
    /// (geometric corners of the domain polygon and label transitions).
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        corner_flags: Vec<bool>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if corner_flags.len() != nv {
            return Err(Error::Mesh("corner_flags length mismatch".into()));
        }
        let mut edge_count: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::Mesh(format!("triangle {t} references vertex {v}")));
                }
            }
            let a = signed_area(&vertices, tri);
            if a <= 0.0 {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive area {a}"
                )));
            }
            for k in 0..3 {
                let e = edge_key(tri[k], tri[(k + 1) % 3]);
                *edge_count.entry(e).or_insert(0) += 1;
            }
        }
        let mut labels: BTreeMap<(usize, usize), i32> = BTreeMap::new();
        for be in &boundary_edges {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            if labels.insert(key, be.label).is_some() {
                return Err(Error::Mesh(format!("duplicate boundary edge {key:?}")));
            }
        }
        for (&e, &c) in &edge_count {
            match c {
                1 => {
                    if !labels.contains_key(&e) {
                        return Err(Error::Mesh(format!("unlabelled boundary edge {e:?}")));
                    }
                }
                2 => {
                    if labels.contains_key(&e) {
                        return Err(Error::Mesh(format!("interior edge {e:?} labelled")));
                    }
                }
                n => return Err(Error::Mesh(format!("edge {e:?} shared by {n} triangles"))),
            }
        }
        if labels.len() != edge_count.values().filter(|&&c| c == 1).count() {
            return Err(Error::Mesh("boundary edge list does not match mesh".into()));
        }

        let mut vertex_labels = vec![0i32; nv];
        for be in &boundary_edges {
            for &v in &be.vertices {
                // Keep the smallest label at segment junctions; corners are
                // flagged separately so the choice is inconsequential.
                if vertex_labels[v] == 0 || be.label < vertex_labels[v] {
                    vertex_labels[v] = be.label;
                }
            }
        }

        let mut counts = vec![0usize; nv + 1];
        for tri in &triangles {
            for &v in tri {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut vertex_tris = vec![0usize; counts[nv]];
        let mut cursor = counts.clone();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[cursor[v]] = t;
                cursor[v] += 1;
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            vertex_labels,
            corner_flags,
            vertex_tri_offsets: counts,
            vertex_tris,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, v: usize) -> Vector2<f64> {
        Vector2::new(self.vertices[v][0], self.vertices[v][1])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn vertex_label(&self, v: usize) -> i32 {
        self.vertex_labels[v]
    }

    pub fn is_corner(&self, v: usize) -> bool {
        self.corner_flags[v]
    }

    pub fn corner_flags(&self) -> &[bool] {
        &self.corner_flags
    }

    /// Elements incident to vertex `v`.
    pub fn vertex_patch(&self, v: usize) -> &[usize] {
        &self.vertex_tris[self.vertex_tri_offsets[v]..self.vertex_tri_offsets[v + 1]]
    }

    /// Element area (positive by the mesh invariant).
    pub fn measure(&self, element: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[element])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.measure(t)).sum()
    }

    pub fn centroid(&self, element: usize) -> Vector2<f64> {
        let [a, b, c] = self.triangles[element];
        (self.vertex(a) + self.vertex(b) + self.vertex(c)) / 3.0
    }

    /// The patch of all triangles sharing at least one vertex with `element`,
    /// including `element` itself. Sorted by element id.
    pub fn element_patch(&self, element: usize) -> Vec<usize> {
        let mut patch: Vec<usize> = self.triangles[element]
            .iter()
            .flat_map(|&v| self.vertex_patch(v).iter().copied())
            .collect();
        patch.sort_unstable();
        patch.dedup();
        patch
    }

    /// Gradients of the three P1 basis functions on `element`.
    pub fn basis_gradients(&self, element: usize) -> [Vector2<f64>; 3] {
        let [a, b, c] = self.triangles[element];
        let (pa, pb, pc) = (self.vertex(a), self.vertex(b), self.vertex(c));
        let inv2a = 1.0 / (2.0 * self.measure(element));
        [
            Vector2::new(pb.y - pc.y, pc.x - pb.x) * inv2a,
            Vector2::new(pc.y - pa.y, pa.x - pc.x) * inv2a,
            Vector2::new(pa.y - pb.y, pb.x - pa.x) * inv2a,
        ]
    }

    /// Gradient of the P1 interpolant of nodal values `w` on `element`.
    pub fn p1_gradient(&self, element: usize, w: &[f64]) -> Vector2<f64> {
        let [a, b, c] = self.triangles[element];
        let g = self.basis_gradients(element);
        g[0] * w[a] + g[1] * w[b] + g[2] * w[c]
    }

    /// Spectral geometry of `element`; errors on degenerate elements.
    pub fn element_geometry(&self, element: usize) -> Result<ElementGeometry> {
        let [a, b, c] = self.triangles[element];
        let (pa, pb, pc) = (self.vertex(a), self.vertex(b), self.vertex(c));
        ElementGeometry::from_points(element, pa, pb, pc)
    }

    /// All unique edges, sorted; each as (min, max) vertex ids.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| edge_key(tri[k], tri[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn signed_area(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (ax, ay) = (vertices[a][0], vertices[a][1]);
    let (bx, by) = (vertices[b][0], vertices[b][1]);
    let (cx, cy) = (vertices[c][0], vertices[c][1]);
    0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
}

/// Per-element spectral data of the affine reference map.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Jacobian of the map from the reference equilateral triangle.
    pub jacobian: Matrix2<f64>,
    /// Semi-axes of the circumscribed ellipse, `lambda[0] >= lambda[1] > 0`.
    pub lambda: [f64; 2],
    /// Orthonormal semi-axis directions.
    pub directions: [Vector2<f64>; 2],
    /// Aspect ratios `s_1 = lambda1/lambda2`, `s_2 = lambda2/lambda1`.
    pub aspect_ratios: [f64; 2],
}

impl ElementGeometry {
    pub fn from_points(
        element: usize,
        pa: Vector2<f64>,
        pb: Vector2<f64>,
        pc: Vector2<f64>,
    ) -> Result<Self> {
        // M_K maps reference edge vectors onto physical edge vectors.
        let e = Matrix2::from_columns(&[pb - pa, pc - pa]);
        let rv = REF_VERTICES;
        let re = Matrix2::new(
            rv[1][0] - rv[0][0],
            rv[2][0] - rv[0][0],
            rv[1][1] - rv[0][1],
            rv[2][1] - rv[0][1],
        );
        let jacobian = e * re.try_inverse().expect("reference map is invertible");
        let det = jacobian.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Geometry {
                element,
                msg: format!("jacobian determinant {det}"),
            });
        }
        // Polar decomposition via SVD: M = U S V^T, B = U S U^T.
        let svd = jacobian.svd(true, false);
        let u = svd.u.expect("svd requested u");
        let mut lambda = [svd.singular_values[0], svd.singular_values[1]];
        let mut dirs = [
            Vector2::new(u[(0, 0)], u[(1, 0)]),
            Vector2::new(u[(0, 1)], u[(1, 1)]),
        ];
        if lambda[0] < lambda[1] {
            lambda.swap(0, 1);
            dirs.swap(0, 1);
        }
        if lambda[1] <= 0.0 {
            return Err(Error::Geometry {
                element,
                msg: "degenerate singular value".into(),
            });
        }
        // Deterministic basis on isotropic elements.
        if (lambda[0] - lambda[1]).abs() <= 1e-12 * lambda[0] {
            dirs = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
        }
        let aspect_ratios = [lambda[0] / lambda[1], lambda[1] / lambda[0]];
        Ok(Self {
            jacobian,
            lambda,
            directions: dirs,
            aspect_ratios,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single_triangle(points: [[f64; 2]; 3]) -> TriMesh {
        TriMesh::new(
            points.to_vec(),
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge { vertices: [0, 1], label: 1 },
                BoundaryEdge { vertices: [1, 2], label: 1 },
                BoundaryEdge { vertices: [2, 0], label: 1 },
            ],
            vec![true, true, true],
        )
        .unwrap()
    }

    #[test]
    fn unit_right_triangle_measure() {
        let m = single_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_relative_eq!(m.measure(0), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn reference_triangle_area() {
        let m = single_triangle(REF_VERTICES);
        assert_relative_eq!(m.measure(0), 3.0 * 3.0f64.sqrt() / 4.0, max_relative = 1e-12);
        assert_relative_eq!(REF_TRIANGLE_AREA, 3.0 * 3.0f64.sqrt() / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn measure_is_translation_invariant() {
        let m1 = single_triangle([[0.1, 0.2], [1.4, 0.3], [0.6, 1.9]]);
        let m2 = single_triangle([[5.1, -6.8], [6.4, -6.7], [5.6, -5.1]]);
        assert_relative_eq!(m1.measure(0), m2.measure(0), max_relative = 1e-12);
    }

    #[test]
    fn equilateral_element_is_isotropic() {
        let g = ElementGeometry::from_points(
            0,
            Vector2::new(REF_VERTICES[0][0], REF_VERTICES[0][1]),
            Vector2::new(REF_VERTICES[1][0], REF_VERTICES[1][1]),
            Vector2::new(REF_VERTICES[2][0], REF_VERTICES[2][1]),
        )
        .unwrap();
        assert_relative_eq!(g.lambda[0], 1.0, max_relative = 1e-10);
        assert_relative_eq!(g.lambda[1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(g.aspect_ratios[0], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn stretched_reference_triangle_spectrum() {
        let pts = [
            Vector2::new(4.0 * REF_VERTICES[0][0], REF_VERTICES[0][1]),
            Vector2::new(4.0 * REF_VERTICES[1][0], REF_VERTICES[1][1]),
            Vector2::new(4.0 * REF_VERTICES[2][0], REF_VERTICES[2][1]),
        ];
        let g = ElementGeometry::from_points(0, pts[0], pts[1], pts[2]).unwrap();
        assert_relative_eq!(g.lambda[0], 4.0, max_relative = 1e-10);
        assert_relative_eq!(g.lambda[1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(g.aspect_ratios[0], 4.0, max_relative = 1e-10);
        assert_relative_eq!(g.aspect_ratios[1], 0.25, max_relative = 1e-10);
        assert!(g.directions[0].x.abs() > 0.999);
    }

    #[test]
    fn rotated_triangle_same_spectrum() {
        let pts = [[0.3, 0.1], [2.3, 0.4], [0.9, 1.2]];
        let base: Vec<Vector2<f64>> = pts.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rot: Vec<Vector2<f64>> = base
            .iter()
            .map(|p| Vector2::new(c * p.x - s * p.y, s * p.x + c * p.y))
            .collect();
        let g1 = ElementGeometry::from_points(0, base[0], base[1], base[2]).unwrap();
        let g2 = ElementGeometry::from_points(0, rot[0], rot[1], rot[2]).unwrap();
        for i in 0..2 {
            assert_relative_eq!(g1.lambda[i], g2.lambda[i], max_relative = 1e-10);
            assert_relative_eq!(g1.aspect_ratios[i], g2.aspect_ratios[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn interior_patch_of_structured_mesh_has_13_elements() {
        let mesh = bench::clc().mesh(200).unwrap();
        // Find an element whose vertices are all interior with valence 6.
        let mut found = false;
        for t in 0..mesh.n_triangles() {
            let all_interior = mesh
                .triangle(t)
                .iter()
                .all(|&v| mesh.vertex_label(v) == 0 && mesh.vertex_patch(v).len() == 6);
            if all_interior {
                assert_eq!(mesh.element_patch(t).len(), 13);
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn corner_patch_smaller_than_interior() {
        let mesh = bench::clc().mesh(200).unwrap();
        let corner_elem = (0..mesh.n_triangles())
            .find(|&t| mesh.triangle(t).iter().any(|&v| mesh.is_corner(v)))
            .unwrap();
        assert!(mesh.element_patch(corner_elem).len() < 13);
    }

    #[test]
    fn single_element_patch_is_itself() {
        let m = single_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.element_patch(0), vec![0]);
    }

    #[test]
    fn benchmark_mesh_areas_exact() {
        for (case, target) in [(bench::clc(), 25600), (bench::clsc(), 4960)] {
            let mesh = case.mesh(target).unwrap();
            assert_relative_eq!(mesh.total_area(), case.domain.area(), max_relative = 1e-10);
        }
    }

    #[test]
    fn interior_edge_with_label_rejected() {
        let r = TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![
                BoundaryEdge { vertices: [0, 1], label: 1 },
                BoundaryEdge { vertices: [1, 2], label: 1 },
                BoundaryEdge { vertices: [2, 3], label: 1 },
                BoundaryEdge { vertices: [3, 0], label: 1 },
                BoundaryEdge { vertices: [0, 2], label: 1 },
            ],
            vec![true; 4],
        );
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn aspect_ratios_multiply_to_one(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0,
            bx in 1.5f64..3.0, by in -1.0f64..1.0,
            cx in -1.0f64..1.0, cy in 1.5f64..3.0,
        ) {
            let (a, mut b, mut c) = (Vector2::new(ax, ay), Vector2::new(bx, by), Vector2::new(cx, cy));
            let cross = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
            prop_assume!(cross.abs() > 1e-3);
            if cross < 0.0 {
                std::mem::swap(&mut b, &mut c);
            }
            let g = ElementGeometry::from_points(0, a, b, c).unwrap();
            prop_assert!((g.aspect_ratios[0] * g.aspect_ratios[1] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn p1_gradient_exact_on_affines(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let mesh = bench::clc().mesh(64).unwrap();
            let w: Vec<f64> = (0..mesh.n_vertices())
                .map(|v| { let p = mesh.vertex(v); a * p.x + b * p.y + c })
                .collect();
            for t in 0..mesh.n_triangles() {
                let g = mesh.p1_gradient(t, &w);
                prop_assert!((g.x - a).abs() < 1e-10 && (g.y - b).abs() < 1e-10);
            }
        }
    }
}
