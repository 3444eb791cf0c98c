//! P1 finite elements for chi-weighted linear elasticity (plane strain):
//! assembly, Dirichlet handling by reduction to free dofs, compliance and
//! strain-energy evaluation.

use faer::sparse::Triplet;
use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::solver::{SpdFactor, SpdMatrix, SpdPattern};

/// Isotropic linear elastic material.
#[derive(Debug, Clone, Copy)]
pub struct MaterialModel {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub lame_lambda: f64,
    pub lame_mu: f64,
}

impl MaterialModel {
    pub fn new(young_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        let (lame_lambda, lame_mu) = lame_coefficients(young_modulus, poisson_ratio)?;
        Ok(Self {
            young_modulus,
            poisson_ratio,
            lame_lambda,
            lame_mu,
        })
    }
}

/// Lame coefficients from Young modulus and Poisson ratio.
pub fn lame_coefficients(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e > 0.0) {
        return Err(Error::Parameter(format!("young modulus {e} must be > 0")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::Parameter(format!(
            "poisson ratio {nu} outside (-1, 0.5)"
        )));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Dirichlet constraint on all boundary edges carrying `label`.
#[derive(Debug, Clone, Copy)]
pub struct DirichletSpec {
    pub label: i32,
    /// Which displacement components are constrained.
    pub components: [bool; 2],
    pub values: [f64; 2],
}

/// Constant traction on all boundary edges carrying `label`.
#[derive(Debug, Clone, Copy)]
pub struct TractionSpec {
    pub label: i32,
    pub traction: [f64; 2],
}

/// Single-vertex constraint, applied to the mesh vertex nearest to `point`.
/// Used to remove rigid-body modes left over by edge constraints.
#[derive(Debug, Clone, Copy)]
pub struct PointConstraint {
    pub point: [f64; 2],
    pub components: [bool; 2],
}

#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<DirichletSpec>,
    pub traction: Vec<TractionSpec>,
    pub point_constraints: Vec<PointConstraint>,
}

impl BoundaryConditions {
    fn validate(&self, mesh: &TriMesh) -> Result<()> {
        let labels: std::collections::BTreeSet<i32> =
            mesh.boundary_edges().iter().map(|e| e.label).collect();
        for d in &self.dirichlet {
            if !labels.contains(&d.label) {
                return Err(Error::Parameter(format!(
                    "dirichlet label {} not present in mesh",
                    d.label
                )));
            }
        }
        for t in &self.traction {
            if !labels.contains(&t.label) {
                return Err(Error::Parameter(format!(
                    "traction label {} not present in mesh",
                    t.label
                )));
            }
            if self.dirichlet.iter().any(|d| d.label == t.label) {
                return Err(Error::Parameter(format!(
                    "label {} used for both dirichlet and traction",
                    t.label
                )));
            }
        }
        Ok(())
    }
}

/// Nodal vector field, two interleaved components per vertex.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n_vertices: usize) -> Self {
        Self {
            values: vec![0.0; 2 * n_vertices],
        }
    }

    pub fn at(&self, vertex: usize) -> Vector2<f64> {
        Vector2::new(self.values[2 * vertex], self.values[2 * vertex + 1])
    }
}

/// Mesh- and bc-bound elasticity context. Caches the constraint layout, the
/// load vector and the symbolic factorization so that re-solves with a new
/// chi only pay numeric assembly and factorization.
pub struct StateSolver {
    n_vertices: usize,
    /// Per dof: Some(prescribed value) or None when free.
    constrained: Vec<Option<f64>>,
    /// Map dof -> free index.
    free_index: Vec<usize>,
    n_free: usize,
    /// Full load vector (length 2*nv).
    load: Vec<f64>,
    pattern: Option<SpdPattern>,
    /// Triangle data captured at construction: vertices, area, basis gradients.
    elems: Vec<ElemData>,
}

struct ElemData {
    verts: [usize; 3],
    area: f64,
    grads: [Vector2<f64>; 3],
}

impl StateSolver {
    pub fn new(mesh: &TriMesh, bc: &BoundaryConditions) -> Result<Self> {
        bc.validate(mesh)?;
        let nv = mesh.n_vertices();
        let mut constrained: Vec<Option<f64>> = vec![None; 2 * nv];
        for d in &bc.dirichlet {
            for be in mesh.boundary_edges() {
                if be.label != d.label {
                    continue;
                }
                for &v in &be.vertices {
                    for c in 0..2 {
                        if d.components[c] {
                            constrained[2 * v + c] = Some(d.values[c]);
                        }
                    }
                }
            }
        }
        for pc in &bc.point_constraints {
            let target = Vector2::new(pc.point[0], pc.point[1]);
            let v = (0..nv)
                .min_by(|&a, &b| {
                    let da = (mesh.vertex(a) - target).norm_squared();
                    let db = (mesh.vertex(b) - target).norm_squared();
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .ok_or_else(|| Error::Mesh("empty mesh".into()))?;
            for c in 0..2 {
                if pc.components[c] {
                    constrained[2 * v + c] = Some(0.0);
                }
            }
        }
        if constrained.iter().all(|c| c.is_none()) {
            return Err(Error::Parameter(
                "no dirichlet constraints: system has rigid-body modes".into(),
            ));
        }

        let mut free_index = vec![usize::MAX; 2 * nv];
        let mut n_free = 0;
        for (dof, c) in constrained.iter().enumerate() {
            if c.is_none() {
                free_index[dof] = n_free;
                n_free += 1;
            }
        }

        // Traction load: exact edge integration of the P1 trace.
        let mut load = vec![0.0; 2 * nv];
        for t in &bc.traction {
            for be in mesh.boundary_edges() {
                if be.label != t.label {
                    continue;
                }
                let [a, b] = be.vertices;
                let len = (mesh.vertex(b) - mesh.vertex(a)).norm();
                for c in 0..2 {
                    load[2 * a + c] += 0.5 * len * t.traction[c];
                    load[2 * b + c] += 0.5 * len * t.traction[c];
                }
            }
        }

        let elems = (0..mesh.n_triangles())
            .map(|t| ElemData {
                verts: mesh.triangle(t),
                area: mesh.measure(t),
                grads: mesh.basis_gradients(t),
            })
            .collect();

        Ok(Self {
            n_vertices: nv,
            constrained,
            free_index,
            n_free,
            load,
            pattern: None,
            elems,
        })
    }

    pub fn load_vector(&self) -> &[f64] {
        &self.load
    }

    /// Solves the chi-weighted state equation. `chi` holds nodal values in
    /// `[chi_min, 1]`; each element uses its centroid (P1-interpolated) value.
    pub fn solve(&mut self, chi: &[f64], material: &MaterialModel) -> Result<VectorField> {
        if chi.len() != self.n_vertices {
            return Err(Error::Parameter("chi length mismatch".into()));
        }
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        let mut rhs = vec![0.0; self.n_free];
        for (dof, c) in self.constrained.iter().enumerate() {
            if c.is_none() {
                rhs[self.free_index[dof]] = self.load[dof];
            }
        }

        let (la, mu) = (material.lame_lambda, material.lame_mu);
        for e in &self.elems {
            let chi_c =
                (chi[e.verts[0]] + chi[e.verts[1]] + chi[e.verts[2]]) / 3.0;
            let w = chi_c * e.area;
            // k[(2i+ci),(2j+cj)] for the P1 plane-strain element.
            for i in 0..3 {
                let gi = e.grads[i];
                let dof_i = [2 * e.verts[i], 2 * e.verts[i] + 1];
                for j in 0..3 {
                    let gj = e.grads[j];
                    let dof_j = [2 * e.verts[j], 2 * e.verts[j] + 1];
                    let k = [
                        [
                            w * ((la + 2.0 * mu) * gi.x * gj.x + mu * gi.y * gj.y),
                            w * (la * gi.x * gj.y + mu * gi.y * gj.x),
                        ],
                        [
                            w * (la * gi.y * gj.x + mu * gi.x * gj.y),
                            w * ((la + 2.0 * mu) * gi.y * gj.y + mu * gi.x * gj.x),
                        ],
                    ];
                    for ci in 0..2 {
                        for cj in 0..2 {
                            let (di, dj) = (dof_i[ci], dof_j[cj]);
                            match (self.constrained[di], self.constrained[dj]) {
                                (None, None) => triplets.push(Triplet::new(
                                    self.free_index[di],
                                    self.free_index[dj],
                                    k[ci][cj],
                                )),
                                (None, Some(g)) => {
                                    if g != 0.0 {
                                        rhs[self.free_index[di]] -= k[ci][cj] * g;
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
        }

        let mat = SpdMatrix::from_triplets(self.n_free, triplets)?;
        if self.pattern.is_none() {
            self.pattern = Some(SpdPattern::new(&mat)?);
        }
        let factor = SpdFactor::new(mat, self.pattern.as_ref().unwrap())?;
        let x = factor.solve(&rhs)?;

        let mut u = vec![0.0; 2 * self.n_vertices];
        for (dof, c) in self.constrained.iter().enumerate() {
            u[dof] = match c {
                Some(g) => *g,
                None => x[self.free_index[dof]],
            };
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite displacement".into()));
        }
        Ok(VectorField { values: u })
    }
}

/// Compliance as the traction work, integrated edge-wise (exact for P1
/// traces under constant traction).
pub fn compliance(mesh: &TriMesh, bc: &BoundaryConditions, u: &VectorField) -> f64 {
    let mut total = 0.0;
    for t in &bc.traction {
        for be in mesh.boundary_edges() {
            if be.label != t.label {
                continue;
            }
            let [a, b] = be.vertices;
            let len = (mesh.vertex(b) - mesh.vertex(a)).norm();
            let tv = Vector2::new(t.traction[0], t.traction[1]);
            total += 0.5 * len * (tv.dot(&u.at(a)) + tv.dot(&u.at(b)));
        }
    }
    total
}

/// Elementwise strain tensor of a P1 displacement (constant per element).
pub fn strain(mesh: &TriMesh, u: &VectorField, element: usize) -> Matrix2<f64> {
    let verts = mesh.triangle(element);
    let grads = mesh.basis_gradients(element);
    let mut grad_u = Matrix2::zeros();
    for i in 0..3 {
        let ui = u.at(verts[i]);
        grad_u += ui * grads[i].transpose();
    }
    0.5 * (grad_u + grad_u.transpose())
}

/// Strain energy density `sigma(u) : eps(u)` on an element (chi not included).
pub fn strain_energy_density(
    mesh: &TriMesh,
    u: &VectorField,
    material: &MaterialModel,
    element: usize,
) -> f64 {
    let eps = strain(mesh, u, element);
    let tr = eps.trace();
    let sigma = 2.0 * material.lame_mu * eps + material.lame_lambda * tr * Matrix2::identity();
    (sigma.component_mul(&eps)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_structured_mesh, Rect, SegmentSpec, Side};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_square(target: usize) -> (TriMesh, BoundaryConditions) {
        let mesh = generate_structured_mesh(
            Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
            target,
            &[],
            &[],
            &[
                SegmentSpec { side: Side::Left, range: [0.0, 1.0], label: 1 },
                SegmentSpec { side: Side::Right, range: [0.0, 1.0], label: 2 },
            ],
        )
        .unwrap();
        let bc = BoundaryConditions {
            dirichlet: vec![DirichletSpec {
                label: 1,
                components: [true, true],
                values: [0.0, 0.0],
            }],
            traction: vec![TractionSpec { label: 2, traction: [3.0, 0.0] }],
            point_constraints: vec![],
        };
        (mesh, bc)
    }

    #[test]
    fn lame_coefficients_reference_values() {
        let m = MaterialModel::new(1000.0, 0.3).unwrap();
        assert_relative_eq!(m.lame_lambda, 576.9230769230769, max_relative = 1e-12);
        assert_relative_eq!(m.lame_mu, 384.61538461538464, max_relative = 1e-12);
    }

    #[test]
    fn lame_rejects_incompressible_and_nonpositive() {
        assert!(lame_coefficients(1000.0, 0.5).is_err());
        assert!(lame_coefficients(0.0, 0.3).is_err());
        assert!(lame_coefficients(-1.0, 0.3).is_err());
    }

    #[test]
    fn uniaxial_patch_test_is_exact() {
        // nu = 0 tension: exact solution u = (t/E * x, 0) is linear in x,
        // so P1 elements reproduce it exactly.
        let (mesh, bc) = unit_square(32);
        let e = 100.0;
        let t = 3.0;
        let material = MaterialModel::new(e, 0.0).unwrap();
        let mut solver = StateSolver::new(&mesh, &bc).unwrap();
        let chi = vec![1.0; mesh.n_vertices()];
        let u = solver.solve(&chi, &material).unwrap();
        for v in 0..mesh.n_vertices() {
            let p = mesh.vertex(v);
            assert_relative_eq!(u.at(v).x, t / e * p.x, epsilon = 1e-10);
            assert_relative_eq!(u.at(v).y, 0.0, epsilon = 1e-10);
        }
        assert_relative_eq!(compliance(&mesh, &bc, &u), t * t / e, max_relative = 1e-10);
        for el in 0..mesh.n_triangles() {
            let eps = strain(&mesh, &u, el);
            assert_relative_eq!(eps[(0, 0)], t / e, epsilon = 1e-10);
            assert_relative_eq!(eps[(1, 1)], 0.0, epsilon = 1e-10);
            assert_relative_eq!(
                strain_energy_density(&mesh, &u, &material, el),
                t * t / e,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn compliance_equals_load_inner_product() {
        let (mesh, bc) = unit_square(50);
        let material = MaterialModel::new(1000.0, 0.3).unwrap();
        let mut solver = StateSolver::new(&mesh, &bc).unwrap();
        let chi: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| 0.5 + 0.5 * (1.0 + (v as f64).sin()) / 2.0)
            .collect();
        let u = solver.solve(&chi, &material).unwrap();
        let dot: f64 = solver
            .load_vector()
            .iter()
            .zip(&u.values)
            .map(|(f, ui)| f * ui)
            .sum();
        assert_relative_eq!(compliance(&mesh, &bc, &u), dot, max_relative = 1e-12);
    }

    #[test]
    fn displacement_scales_inversely_with_stiffness() {
        let (mesh, bc) = unit_square(50);
        let chi = vec![1.0; mesh.n_vertices()];
        let m1 = MaterialModel::new(500.0, 0.3).unwrap();
        let m2 = MaterialModel::new(2000.0, 0.3).unwrap();
        let u1 = StateSolver::new(&mesh, &bc).unwrap().solve(&chi, &m1).unwrap();
        let u2 = StateSolver::new(&mesh, &bc).unwrap().solve(&chi, &m2).unwrap();
        for (a, b) in u1.values.iter().zip(&u2.values) {
            assert_relative_eq!(*a, 4.0 * b, epsilon = 1e-12, max_relative = 1e-9);
        }
    }

    #[test]
    fn uniform_chi_scales_compliance_inversely() {
        let (mesh, bc) = unit_square(50);
        let material = MaterialModel::new(1000.0, 0.3).unwrap();
        let mut solver = StateSolver::new(&mesh, &bc).unwrap();
        let full = vec![1.0; mesh.n_vertices()];
        let weak = vec![0.25; mesh.n_vertices()];
        let c_full = compliance(&mesh, &bc, &solver.solve(&full, &material).unwrap());
        let c_weak = compliance(&mesh, &bc, &solver.solve(&weak, &material).unwrap());
        assert_relative_eq!(c_weak, 4.0 * c_full, max_relative = 1e-10);
    }

    #[test]
    fn unconstrained_system_is_rejected() {
        let (mesh, _) = unit_square(32);
        let bc = BoundaryConditions {
            dirichlet: vec![],
            traction: vec![TractionSpec { label: 2, traction: [1.0, 0.0] }],
            point_constraints: vec![],
        };
        assert!(StateSolver::new(&mesh, &bc).is_err());
    }

    #[test]
    fn missing_label_is_rejected() {
        let (mesh, mut bc) = unit_square(32);
        bc.traction[0].label = 77;
        assert!(StateSolver::new(&mesh, &bc).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn compliance_never_increases_with_chi(seed in 0u64..1_000_000) {
            let (mesh, bc) = unit_square(18);
            let material = MaterialModel::new(1000.0, 0.3).unwrap();
            let mut solver = StateSolver::new(&mesh, &bc).unwrap();
            let nv = mesh.n_vertices();
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut rand = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let lo: Vec<f64> = (0..nv).map(|_| 0.05 + 0.6 * rand()).collect();
            let hi: Vec<f64> = lo.iter().map(|v| (v + 0.3).min(1.0)).collect();
            let c_lo = compliance(&mesh, &bc, &solver.solve(&lo, &material).unwrap());
            let c_hi = compliance(&mesh, &bc, &solver.solve(&hi, &material).unwrap());
            prop_assert!(c_hi <= c_lo * (1.0 + 1e-12));
        }
    }
}
