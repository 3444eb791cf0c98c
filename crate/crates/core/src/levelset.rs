//! Level-set state: characteristic mapping, volume, compliance sensitivity
//! with the volume multiplier, the semi-implicit reaction-diffusion step and
//! thresholding.

use faer::sparse::Triplet;

use crate::error::{Error, Result};
use crate::fem::{strain_energy_density, MaterialModel, VectorField};
use crate::mesh::TriMesh;
use crate::solver::{SpdFactor, SpdMatrix, SpdPattern};

/// Nodal level-set function, values in [-1, 1] after thresholding.
#[derive(Debug, Clone)]
pub struct LevelSetField {
    pub values: Vec<f64>,
}

/// Nodal material indicator: 1 where phi >= 0, chi_min elsewhere.
#[derive(Debug, Clone)]
pub struct CharacteristicField {
    pub values: Vec<f64>,
    pub chi_min: f64,
}

/// Volume Lagrange multiplier and reaction normalization.
#[derive(Debug, Clone, Copy)]
pub struct MultiplierState {
    pub theta: f64,
    pub kappa: f64,
}

impl MultiplierState {
    pub fn new() -> Self {
        Self {
            theta: 0.0,
            kappa: 1.0,
        }
    }
}

impl Default for MultiplierState {
    fn default() -> Self {
        Self::new()
    }
}

/// Nodal rule of the characteristic function; phi = 0 counts as material.
pub fn characteristic(phi: &LevelSetField, chi_min: f64) -> Result<CharacteristicField> {
    if !(chi_min > 0.0 && chi_min < 1.0) {
        return Err(Error::Parameter(format!("chi_min {chi_min} outside (0, 1)")));
    }
    let values = phi
        .values
        .iter()
        .map(|&p| if p >= 0.0 { 1.0 } else { chi_min })
        .collect();
    Ok(CharacteristicField { values, chi_min })
}

/// Exact integral of the P1 interpolant of chi over the mesh.
pub fn volume(mesh: &TriMesh, chi: &CharacteristicField) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            mesh.measure(t) * (chi.values[a] + chi.values[b] + chi.values[c]) / 3.0
        })
        .sum()
}

/// Default bound on the relative volume change per iteration enforced by the
/// multiplier selection.
pub const DEFAULT_VOLUME_RATE: f64 = 0.01;

/// Nodal strain-energy sensitivities `chi * sigma(u):eps(u)`, with element
/// energies averaged to nodes by area weights.
pub fn nodal_energies(
    mesh: &TriMesh,
    u: &VectorField,
    chi: &CharacteristicField,
    material: &MaterialModel,
) -> Result<Vec<f64>> {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut elem_energy = vec![0.0; nt];
    for t in 0..nt {
        elem_energy[t] = strain_energy_density(mesh, u, material, t);
        if !elem_energy[t].is_finite() {
            return Err(Error::Numerical(format!(
                "strain energy on element {t} is not finite"
            )));
        }
    }
    let mut nodal = vec![0.0; nv];
    for v in 0..nv {
        let mut num = 0.0;
        let mut den = 0.0;
        for &t in mesh.vertex_patch(v) {
            let a = mesh.measure(t);
            num += a * elem_energy[t];
            den += a;
        }
        nodal[v] = num / den;
    }
    Ok(nodal.iter().zip(&chi.values).map(|(&e, &c)| c * e).collect())
}

/// Compliance sensitivity with self-adjoint state: the nodal strain-energy
/// field minus the current volume multiplier. Sets the sup-normalization
/// factor kappa on the state.
pub fn sensitivity(
    mesh: &TriMesh,
    u: &VectorField,
    chi: &CharacteristicField,
    material: &MaterialModel,
    state: &mut MultiplierState,
) -> Result<Vec<f64>> {
    let energies = nodal_energies(mesh, u, chi, material)?;
    let field: Vec<f64> = energies.iter().map(|e| e - state.theta).collect();
    let max_abs = field.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    state.kappa = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
    Ok(field)
}

/// Backward-Euler diffusion operator `(M/dt + tau*K)` on a fixed mesh,
/// factorized once and reused across iterations.
pub struct EvolutionSolver {
    mass: Vec<Triplet<usize, usize, f64>>,
    factor: SpdFactor,
    dt: f64,
    n: usize,
}

impl EvolutionSolver {
    pub fn new(mesh: &TriMesh, tau: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(tau > 0.0) {
            return Err(Error::Parameter(format!("dt {dt} and tau {tau} must be > 0")));
        }
        let n = mesh.n_vertices();
        let mut mass = Vec::with_capacity(9 * mesh.n_triangles());
        let mut system = Vec::with_capacity(9 * mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let verts = mesh.triangle(t);
            let area = mesh.measure(t);
            let grads = mesh.basis_gradients(t);
            for i in 0..3 {
                for j in 0..3 {
                    let m = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    let k = area * grads[i].dot(&grads[j]);
                    mass.push(Triplet::new(verts[i], verts[j], m));
                    system.push(Triplet::new(verts[i], verts[j], m / dt + tau * k));
                }
            }
        }
        let mat = SpdMatrix::from_triplets(n, system)?;
        let pattern = SpdPattern::new(&mat)?;
        let factor = SpdFactor::new(mat, &pattern)?;
        Ok(Self {
            mass,
            factor,
            dt,
            n,
        })
    }

    /// One semi-implicit step: implicit diffusion, explicit reaction
    /// `kappa * dt_f`, homogeneous Neumann. Returns the unthresholded field.
    pub fn evolve(
        &self,
        phi: &LevelSetField,
        dt_f: &[f64],
        kappa: f64,
    ) -> Result<LevelSetField> {
        if phi.values.len() != self.n || dt_f.len() != self.n {
            return Err(Error::Parameter("field length mismatch".into()));
        }
        // rhs = M*(phi/dt + kappa*dt_f)
        let combined: Vec<f64> = phi
            .values
            .iter()
            .zip(dt_f)
            .map(|(&p, &d)| p / self.dt + kappa * d)
            .collect();
        let mut rhs = vec![0.0; self.n];
        for t in &self.mass {
            rhs[t.row] += t.val * combined[t.col];
        }
        let values = self.factor.solve(&rhs)?;
        Ok(LevelSetField { values })
    }

    /// `(M/dt + tau K)^{-1} M f`: the linear response the evolve step applies
    /// to any additive right-hand-side term.
    fn response(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; self.n];
        for t in &self.mass {
            rhs[t.row] += t.val * f[t.col];
        }
        self.factor.solve(&rhs)
    }

    /// Smallest multiplier theta >= 0 whose evolve step keeps the material
    /// volume at or below `target`. Exploits the linearity of the step in
    /// theta: the post-step field is base + kappa(theta) * (r_e - theta r_1)
    /// with three precomputed responses, so candidate multipliers cost O(n).
    /// Returns 0 when no removal is needed; saturates when even a dominant
    /// multiplier cannot reach the target within one step.
    pub fn multiplier_for_target(
        &self,
        mesh: &TriMesh,
        phi: &LevelSetField,
        energies: &[f64],
        chi_min: f64,
        target: f64,
    ) -> Result<f64> {
        if phi.values.len() != self.n || energies.len() != self.n {
            return Err(Error::Parameter("field length mismatch".into()));
        }
        let scaled: Vec<f64> = phi.values.iter().map(|p| p / self.dt).collect();
        let base = self.response(&scaled)?;
        let r_e = self.response(energies)?;
        let r_1 = self.response(&vec![1.0; self.n])?;
        let volume_after = |theta: f64| -> Result<f64> {
            let max_abs = energies
                .iter()
                .fold(0.0f64, |m, &e| m.max((e - theta).abs()));
            let kappa = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
            let values: Vec<f64> = (0..self.n)
                .map(|v| base[v] + kappa * (r_e[v] - theta * r_1[v]))
                .collect();
            let chi = characteristic(&threshold(LevelSetField { values }), chi_min)?;
            Ok(volume(mesh, &chi))
        };
        if volume_after(0.0)? <= target {
            return Ok(0.0);
        }
        // Cap at the maximum energy: there the reaction is nonpositive
        // everywhere yet still graded by energy, the strongest removal that
        // does not degenerate into a uniform downward shift of the level set.
        let e_max = energies.iter().fold(0.0f64, |m, &e| m.max(e));
        let mut hi = e_max.max(f64::MIN_POSITIVE);
        if volume_after(hi)? > target {
            return Ok(hi);
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if volume_after(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

/// Clamp rule after evolution: values beyond the [-1, 1] band snap to +-1.
pub fn threshold(phi: LevelSetField) -> LevelSetField {
    LevelSetField {
        values: phi
            .values
            .into_iter()
            .map(|v| if v.abs() > 1.0 { v.signum() } else { v })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_structured_mesh, Rect, SegmentSpec, Side};
    use crate::fem::{DirichletSpec, MaterialModel, StateSolver, TractionSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square_mesh(target: usize) -> TriMesh {
        generate_structured_mesh(
            Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
            target,
            &[],
            &[],
            &[SegmentSpec { side: Side::Left, range: [0.0, 1.0], label: 1 }],
        )
        .unwrap()
    }

    #[test]
    fn characteristic_nodal_rule() {
        let phi = LevelSetField { values: vec![1.0, -0.2, 0.0, 0.7, -1.0] };
        let chi = characteristic(&phi, 1e-3).unwrap();
        assert_eq!(chi.values, vec![1.0, 1e-3, 1.0, 1.0, 1e-3]);
    }

    #[test]
    fn characteristic_rejects_bad_chi_min() {
        let phi = LevelSetField { values: vec![0.0] };
        assert!(characteristic(&phi, 0.0).is_err());
        assert!(characteristic(&phi, 1.0).is_err());
    }

    #[test]
    fn volume_of_constant_fields() {
        let mesh = square_mesh(60);
        let phi = LevelSetField { values: vec![1.0; mesh.n_vertices()] };
        let chi = characteristic(&phi, 1e-3).unwrap();
        assert_relative_eq!(volume(&mesh, &chi), 1.0, max_relative = 1e-12);
        let phi = LevelSetField { values: vec![-1.0; mesh.n_vertices()] };
        let chi = characteristic(&phi, 1e-3).unwrap();
        assert_relative_eq!(volume(&mesh, &chi), 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn volume_of_half_plane_split() {
        // Nodal chi with chi -> 0 limit: exact within one element band.
        let mesh = square_mesh(200);
        let phi = LevelSetField {
            values: (0..mesh.n_vertices())
                .map(|v| if mesh.vertex(v).x < 0.5 { 1.0 } else { -1.0 })
                .collect(),
        };
        let chi = characteristic(&phi, 1e-9).unwrap();
        let h = (2.0 / mesh.n_triangles() as f64).sqrt();
        assert!((volume(&mesh, &chi) - 0.5).abs() < h);
    }

    fn loaded_state(mesh: &TriMesh) -> (crate::fem::VectorField, MaterialModel) {
        let bc = crate::fem::BoundaryConditions {
            dirichlet: vec![DirichletSpec {
                label: 1,
                components: [true, true],
                values: [0.0, 0.0],
            }],
            traction: vec![TractionSpec { label: 9, traction: [0.0, -1.0] }],
            point_constraints: vec![],
        };
        let material = MaterialModel::new(1000.0, 0.3).unwrap();
        let mut solver = StateSolver::new(mesh, &bc).unwrap();
        let chi = vec![1.0; mesh.n_vertices()];
        (solver.solve(&chi, &material).unwrap(), material)
    }

    #[test]
    fn sensitivity_zero_displacement() {
        let mesh = square_mesh(32);
        let u = crate::fem::VectorField::zeros(mesh.n_vertices());
        let material = MaterialModel::new(1000.0, 0.3).unwrap();
        let phi = LevelSetField { values: vec![1.0; mesh.n_vertices()] };
        let chi = characteristic(&phi, 1e-3).unwrap();
        let mut state = MultiplierState::default();
        let field = sensitivity(&mesh, &u, &chi, &material, &mut state).unwrap();
        assert!(field.iter().all(|&v| v == 0.0));
        assert_eq!(state.kappa, 1.0);
    }

    #[test]
    fn sensitivity_sup_normalization() {
        let mesh = square_mesh(60);
        let (u, material) = loaded_state(&mesh);
        let phi = LevelSetField { values: vec![1.0; mesh.n_vertices()] };
        let chi = characteristic(&phi, 1e-3).unwrap();
        let mut state = MultiplierState {
            theta: 1e-4,
            kappa: 1.0,
        };
        let field = sensitivity(&mesh, &u, &chi, &material, &mut state).unwrap();
        let max = field
            .iter()
            .fold(0.0f64, |m, &v| m.max((state.kappa * v).abs()));
        assert_relative_eq!(max, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn multiplier_selection_tracks_volume_target() {
        // A level set inside the (-1, 1) band with graded energies: the
        // selected multiplier must hit the requested volume closely and be
        // monotone in the target.
        let mesh = square_mesh(200);
        let n = mesh.n_vertices();
        let solver = EvolutionSolver::new(&mesh, 1e-4, 0.1).unwrap();
        let phi = LevelSetField {
            values: (0..n).map(|v| 0.2 * (mesh.vertex(v).x - 0.5)).collect(),
        };
        let energies: Vec<f64> = (0..n).map(|v| mesh.vertex(v).x).collect();
        let chi = characteristic(&phi, 1e-3).unwrap();
        let v_now = volume(&mesh, &chi);
        let target = 0.9 * v_now;
        let theta = solver
            .multiplier_for_target(&mesh, &phi, &energies, 1e-3, target)
            .unwrap();
        assert!(theta > 0.0);
        let field: Vec<f64> = energies.iter().map(|e| e - theta).collect();
        let max_abs = field.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let out = threshold(solver.evolve(&phi, &field, 1.0 / max_abs).unwrap());
        let v_next = volume(&mesh, &characteristic(&out, 1e-3).unwrap());
        assert!(v_next <= target + 1e-12);
        let h = (2.0 / mesh.n_triangles() as f64).sqrt();
        assert!(v_next >= target - 3.0 * h);
        let theta_easy = solver
            .multiplier_for_target(&mesh, &phi, &energies, 1e-3, 0.98 * v_now)
            .unwrap();
        assert!(theta_easy <= theta);
        let theta_none = solver
            .multiplier_for_target(&mesh, &phi, &energies, 1e-3, 1.5 * v_now)
            .unwrap();
        assert_eq!(theta_none, 0.0);
    }

    #[test]
    fn evolve_keeps_constants() {
        let mesh = square_mesh(32);
        let n = mesh.n_vertices();
        let solver = EvolutionSolver::new(&mesh, 0.7, 0.1).unwrap();
        let phi = LevelSetField { values: vec![0.42; n] };
        let out = solver.evolve(&phi, &vec![0.0; n], 1.0).unwrap();
        for v in out.values {
            assert_relative_eq!(v, 0.42, epsilon = 1e-11);
        }
    }

    #[test]
    fn evolve_constant_forcing_advances_by_dt() {
        let mesh = square_mesh(32);
        let n = mesh.n_vertices();
        let dt = 0.1;
        let solver = EvolutionSolver::new(&mesh, 2.5, dt).unwrap();
        let phi = LevelSetField { values: vec![0.0; n] };
        let out = solver.evolve(&phi, &vec![1.0; n], 1.0).unwrap();
        for v in out.values {
            assert_relative_eq!(v, dt, epsilon = 1e-11);
        }
    }

    #[test]
    fn evolve_conserves_mean_without_forcing() {
        let mesh = square_mesh(120);
        let n = mesh.n_vertices();
        let solver = EvolutionSolver::new(&mesh, 0.3, 0.1).unwrap();
        let phi = LevelSetField {
            values: (0..n).map(|v| ((v * 31 % 17) as f64 / 8.5) - 1.0).collect(),
        };
        let out = solver.evolve(&phi, &vec![0.0; n], 1.0).unwrap();
        let mass = |f: &LevelSetField| {
            let mut total = 0.0;
            for t in 0..mesh.n_triangles() {
                let [a, b, c] = mesh.triangle(t);
                total += mesh.measure(t) / 3.0
                    * (f.values[a] + f.values[b] + f.values[c]);
            }
            total
        };
        assert_relative_eq!(mass(&out), mass(&phi), epsilon = 1e-10);
    }

    #[test]
    fn evolve_diffusion_contracts_variance() {
        let mesh = square_mesh(120);
        let n = mesh.n_vertices();
        let solver = EvolutionSolver::new(&mesh, 50.0, 0.1).unwrap();
        let phi = LevelSetField {
            values: (0..n).map(|v| if v % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        };
        let out = solver.evolve(&phi, &vec![0.0; n], 1.0).unwrap();
        let var = |f: &LevelSetField| {
            let mean = f.values.iter().sum::<f64>() / n as f64;
            f.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        };
        assert!(var(&out) < var(&phi));
    }

    #[test]
    fn evolve_rejects_nonpositive_parameters() {
        let mesh = square_mesh(32);
        assert!(EvolutionSolver::new(&mesh, 0.0, 0.1).is_err());
        assert!(EvolutionSolver::new(&mesh, 0.5, 0.0).is_err());
    }

    #[test]
    fn threshold_clamps_outside_band() {
        let phi = LevelSetField { values: vec![1.7, -3.0, 0.5, 1.0, -1.0, 0.0] };
        let out = threshold(phi);
        assert_eq!(out.values, vec![1.0, -1.0, 0.5, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn characteristic_of_thresholded_field_is_two_valued() {
        let phi = threshold(LevelSetField { values: vec![2.0, -0.3, 0.9, -5.0] });
        let chi = characteristic(&phi, 1e-3).unwrap();
        assert!(chi.values.iter().all(|&v| v == 1.0 || v == 1e-3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reaction_scaling_invariance(c in 1e-3f64..1e3) {
            // Scaling the sensitivity and dividing kappa accordingly leaves
            // the evolved field unchanged.
            let mesh = square_mesh(32);
            let n = mesh.n_vertices();
            let solver = EvolutionSolver::new(&mesh, 0.4, 0.1).unwrap();
            let phi = LevelSetField {
                values: (0..n).map(|v| ((v % 7) as f64 - 3.0) / 3.0).collect(),
            };
            let field: Vec<f64> = (0..n).map(|v| ((v % 5) as f64 - 2.0) / 2.0).collect();
            let scaled: Vec<f64> = field.iter().map(|v| c * v).collect();
            let a = solver.evolve(&phi, &field, 0.8).unwrap();
            let b = solver.evolve(&phi, &scaled, 0.8 / c).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
