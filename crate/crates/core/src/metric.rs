//! From patch gradient-mismatch matrices to the optimal anisotropic metric:
//! closed-form element spec (aspect ratios, directions, semi-axis lengths),
//! nodewise averaging and grading towards an isotropic interior.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::levelset::CharacteristicField;
use crate::mesh::TriMesh;

/// Clamps and regularization for the metric construction.
#[derive(Debug, Clone, Copy)]
pub struct MetricLimits {
    /// Maximum admissible aspect ratio.
    pub s_max: f64,
    /// Relative eigenvalue floor, against the mesh-wide maximum.
    pub eps_g: f64,
    /// Isotropic background size used where the driver field is flat.
    pub h_bg: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl MetricLimits {
    pub fn new(domain_diameter: f64, h_iso: f64, grade: bool) -> Self {
        let h_bg = domain_diameter / 10.0;
        // h_iso is meaningless when grading is off; fall back to a small
        // fraction of the domain so the clamp never dominates.
        let lambda_min = if grade {
            h_iso / 4.0
        } else {
            domain_diameter / 2000.0
        };
        Self {
            s_max: 100.0,
            eps_g: 1e-12,
            h_bg,
            lambda_min,
            lambda_max: h_bg,
        }
    }
}

/// Optimal shape/orientation/size for one element.
#[derive(Debug, Clone)]
pub struct ElementSpec {
    /// Target semi-axis lengths, `lambda[0] >= lambda[1]`.
    pub lambda: [f64; 2],
    /// Directions associated with `lambda`.
    pub directions: [Vector2<f64>; 2],
    /// Optimal aspect ratios (before length clamping).
    pub aspect: [f64; 2],
    /// True when the mismatch matrix was numerically zero and the isotropic
    /// background size was used instead.
    pub background: bool,
}

/// Eigen-decomposition of a symmetric 2x2 matrix, eigenvalues descending.
/// Ties return the identity axes.
pub fn sym_eigen(m: &Matrix2<f64>) -> ([f64; 2], [Vector2<f64>; 2]) {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let delta = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let g1 = mean + delta;
    let g2 = mean - delta;
    if delta <= 1e-14 * mean.abs().max(1e-300) {
        return ([g1, g2], [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)]);
    }
    // Eigenvector for g1: pick the better-conditioned expression.
    let v1 = if (g1 - a).abs() > (g1 - c).abs() {
        Vector2::new(b, g1 - a)
    } else {
        Vector2::new(g1 - c, b)
    };
    let v1 = if v1.norm() > 0.0 {
        v1.normalize()
    } else {
        Vector2::new(1.0, 0.0)
    };
    let v2 = Vector2::new(-v1.y, v1.x);
    ([g1, g2], [v1, v2])
}

/// Closed-form solution of the shape-optimization problem for one element,
/// plus the equidistribution sizing.
///
/// `card` is the current mesh cardinality, `patch_pullback_area` the measure
/// of the patch pulled back through the element's affine map, and
/// `g_max_mesh` the largest mismatch eigenvalue over the whole mesh (used to
/// detect elements where the driver field is flat).
pub fn optimal_element_spec(
    g_hat: &Matrix2<f64>,
    tol: f64,
    card: usize,
    patch_pullback_area: f64,
    g_max_mesh: f64,
    limits: &MetricLimits,
) -> Result<ElementSpec> {
    if !(tol > 0.0) || card == 0 || !(patch_pullback_area > 0.0) {
        return Err(Error::Parameter(
            "optimal_element_spec requires tol > 0, card >= 1, pullback area > 0".into(),
        ));
    }
    let ([g1_raw, g2_raw], dirs) = sym_eigen(g_hat);
    let g_floor = limits.eps_g * g_max_mesh.max(0.0);
    if !(g1_raw > g_floor) {
        // Flat driver field: isotropic background spacing.
        return Ok(ElementSpec {
            lambda: [limits.h_bg, limits.h_bg],
            directions: [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)],
            aspect: [1.0, 1.0],
            background: true,
        });
    }
    let g1 = g1_raw;
    let g2 = g2_raw
        .max(g1 / (limits.s_max * limits.s_max))
        .max(g_floor.max(f64::MIN_POSITIVE));

    let prod_sqrt = (g1 * g2).sqrt();
    let aspect = [prod_sqrt / g2, prod_sqrt / g1];
    // r*_1 pairs with the small eigenvalue, r*_2 with the large one.
    let directions = [dirs[1], dirs[0]];

    let scale = (tol * tol / (2.0 * card as f64 * patch_pullback_area)).sqrt();
    let mut lambda = [scale / g2.sqrt(), scale / g1.sqrt()];
    for l in &mut lambda {
        *l = l.clamp(limits.lambda_min, limits.lambda_max);
    }
    if lambda[0] / lambda[1] > limits.s_max {
        lambda[1] = lambda[0] / limits.s_max;
    }
    if lambda[0] < lambda[1] {
        lambda.swap(0, 1);
    }
    Ok(ElementSpec {
        lambda,
        directions,
        aspect,
        background: false,
    })
}

/// `M = sum_i r_i r_i^T / lambda_i^2`: unit metric length along `r_i` equals
/// `lambda_i` in physical space.
pub fn element_metric(spec: &ElementSpec) -> Matrix2<f64> {
    let mut m = Matrix2::zeros();
    for i in 0..2 {
        let r = spec.directions[i];
        m += r * r.transpose() / (spec.lambda[i] * spec.lambda[i]);
    }
    m
}

/// Nodewise SPD metric field.
#[derive(Debug, Clone)]
pub struct MetricTensorField {
    pub tensors: Vec<Matrix2<f64>>,
}

impl MetricTensorField {
    /// Verifies symmetry-positive-definiteness at every vertex.
    pub fn validate(&self) -> Result<()> {
        for (v, m) in self.tensors.iter().enumerate() {
            let ([g1, g2], _) = sym_eigen(m);
            if !(g2 > 0.0) || !g1.is_finite() {
                return Err(Error::Numerical(format!(
                    "metric at vertex {v} is not SPD (eigenvalues {g1}, {g2})"
                )));
            }
        }
        Ok(())
    }
}

/// Area-weighted average of element metrics over each vertex patch.
pub fn nodewise_metric(mesh: &TriMesh, element_metrics: &[Matrix2<f64>]) -> Result<MetricTensorField> {
    if element_metrics.len() != mesh.n_triangles() {
        return Err(Error::Parameter("one metric per element required".into()));
    }
    let mut tensors = Vec::with_capacity(mesh.n_vertices());
    for v in 0..mesh.n_vertices() {
        let patch = mesh.vertex_patch(v);
        if patch.is_empty() {
            return Err(Error::Mesh(format!("isolated vertex {v}")));
        }
        let mut sum = Matrix2::zeros();
        let mut area = 0.0;
        for &t in patch {
            let a = mesh.measure(t);
            sum += a * element_metrics[t];
            area += a;
        }
        tensors.push(sum / area);
    }
    let field = MetricTensorField { tensors };
    debug_assert!(field.validate().is_ok());
    Ok(field)
}

/// Graded metric: isotropic size `h_iso` inside the material, anisotropic
/// metric outside. With `grade = false` the input is returned unchanged.
pub fn grade_metric(
    metric: MetricTensorField,
    chi: &CharacteristicField,
    h_iso: f64,
    grade: bool,
) -> Result<MetricTensorField> {
    if !grade {
        return Ok(metric);
    }
    if !(h_iso > 0.0) {
        return Err(Error::Parameter(format!("h_iso {h_iso} must be > 0")));
    }
    let iso = Matrix2::identity() / (h_iso * h_iso);
    let tensors = metric
        .tensors
        .iter()
        .zip(&chi.values)
        .map(|(m, &c)| (1.0 - c) * m + c * iso)
        .collect();
    let graded = MetricTensorField { tensors };
    debug_assert!(graded.validate().is_ok());
    Ok(graded)
}
