//! Recovery-based anisotropic a-posteriori error estimation.
//!
//! The adaptation driver is the filtered level set `w = tanh(beta*phi)/tanh(beta)`.
//! For each element, a patch-constant recovered gradient is compared against
//! the elementwise P1 gradient; the mismatch enters an anisotropic quadratic
//! form weighted by the element's spectral geometry.

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::levelset::LevelSetField;
use crate::mesh::{ElementGeometry, TriMesh};

/// Per-element recovered-gradient data.
#[derive(Debug, Clone)]
pub struct PatchGradientData {
    pub element: usize,
    /// Patch-constant recovered gradient for this element.
    pub recovered_gradient: Vector2<f64>,
    /// `G / |patch|`, symmetric positive semidefinite.
    pub scaled_matrix: Matrix2<f64>,
    /// Unscaled mismatch matrix `G`.
    pub matrix: Matrix2<f64>,
    pub patch_area: f64,
}

/// `w = tanh(beta*phi) / tanh(beta)`, sharpening the material/void transition.
pub fn filter_levelset(phi: &LevelSetField, beta: f64) -> Vec<f64> {
    let norm = beta.tanh();
    phi.values.iter().map(|&p| (beta * p).tanh() / norm).collect()
}

/// Area-weighted average of the P1 gradient over the vertex-neighbour patch.
pub fn recovered_gradient(mesh: &TriMesh, w: &[f64], element: usize) -> Vector2<f64> {
    let mut sum = Vector2::zeros();
    let mut area = 0.0;
    for t in mesh.element_patch(element) {
        let a = mesh.measure(t);
        sum += a * mesh.p1_gradient(t, w);
        area += a;
    }
    sum / area
}

/// Gradient-mismatch matrix of the patch, using the single patch-constant
/// recovered gradient of `element`.
pub fn patch_matrix(mesh: &TriMesh, w: &[f64], element: usize) -> PatchGradientData {
    let patch = mesh.element_patch(element);
    let mut sum = Vector2::zeros();
    let mut area = 0.0;
    let grads: Vec<(f64, Vector2<f64>)> = patch
        .iter()
        .map(|&t| (mesh.measure(t), mesh.p1_gradient(t, w)))
        .collect();
    for &(a, g) in &grads {
        sum += a * g;
        area += a;
    }
    let recovered = sum / area;
    let mut g_mat = Matrix2::zeros();
    for &(a, g) in &grads {
        let e = recovered - g;
        g_mat += a * e * e.transpose();
    }
    PatchGradientData {
        element,
        recovered_gradient: recovered,
        scaled_matrix: g_mat / area,
        matrix: g_mat,
        patch_area: area,
    }
}

/// Anisotropic local estimator:
/// `eta_K^2 = (l1*l2)^{-1} * sum_i l_i^2 (r_i^T G r_i)`.
pub fn local_estimator(geom: &ElementGeometry, data: &PatchGradientData) -> f64 {
    let scale = 1.0 / (geom.lambda[0] * geom.lambda[1]);
    let mut sq = 0.0;
    for i in 0..2 {
        let r = geom.directions[i];
        let quad = (data.matrix * r).dot(&r);
        sq += geom.lambda[i] * geom.lambda[i] * quad;
    }
    (scale * sq).max(0.0).sqrt()
}

/// `eta^2 = sum_K eta_K^2` over the whole mesh.
pub fn global_estimator(mesh: &TriMesh, w: &[f64]) -> Result<f64> {
    let mut sq = 0.0;
    for t in 0..mesh.n_triangles() {
        let geom = mesh.element_geometry(t)?;
        let data = patch_matrix(mesh, w, t);
        let eta = local_estimator(&geom, &data);
        sq += eta * eta;
    }
    Ok(sq.sqrt())
}
