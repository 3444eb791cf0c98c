//! Optimization loops: fixed-mesh evolution and the adaptive variant that
//! interleaves evolution with metric-driven remeshing.

use nalgebra::Matrix2;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{filter_levelset, patch_matrix};
use crate::fem::{compliance, StateSolver, VectorField};
use crate::levelset::{
    characteristic, nodal_energies, sensitivity, threshold, volume, CharacteristicField,
    EvolutionSolver,
    LevelSetField, MultiplierState,
};
use crate::mesh::TriMesh;
use crate::metric::{
    element_metric, grade_metric, nodewise_metric, optimal_element_spec, MetricLimits,
    MetricTensorField,
};
use crate::remesh::{adapt_mesh, AdaptParams};
use crate::transfer::project_scalar;

/// Relative volume-constraint slack below which a run counts as feasible
/// when testing convergence.
const VOLUME_SLACK: f64 = 2e-2;
/// Number of consecutive feasible iterations with errComp below tolerance
/// required to declare convergence of the fixed-mesh loop.
const CALM_WINDOW: usize = 5;

/// One row of the convergence history.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub k: usize,
    pub compliance: f64,
    pub volume: f64,
    pub theta: f64,
    pub err_comp: f64,
    /// Relative cardinality change; set only on adaptation iterations.
    pub err_mesh: Option<f64>,
    pub n_elements: usize,
    pub adapted: bool,
    pub seconds: f64,
}

/// Final state of a run.
#[derive(Debug)]
pub struct RunResult {
    pub mesh: TriMesh,
    pub phi: LevelSetField,
    pub chi: CharacteristicField,
    pub u: VectorField,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub compliance: f64,
    pub volume: f64,
}

/// Nodal interpolation of the initial level-set spec.
pub fn initial_phi(mesh: &TriMesh, cfg: &RunConfig) -> LevelSetField {
    let values = (0..mesh.n_vertices())
        .map(|v| {
            let p = mesh.vertex(v);
            cfg.phi0.eval(p.x, p.y)
        })
        .collect();
    LevelSetField { values }
}

/// Builds the nodal adaptation metric for the current level-set field:
/// filtered driver field, per-element mismatch matrices, optimal element
/// specs, elementwise metrics averaged to nodes, optional interface grading.
pub fn adaptation_metric(
    mesh: &TriMesh,
    phi: &LevelSetField,
    chi: &CharacteristicField,
    cfg: &RunConfig,
) -> Result<MetricTensorField> {
    let w = filter_levelset(phi, cfg.beta);
    let card = mesh.n_triangles();
    let limits = MetricLimits::new(cfg.case.domain.diameter(), cfg.h_iso, cfg.grade);

    let mut data = Vec::with_capacity(card);
    let mut g_max_mesh = 0.0f64;
    for t in 0..card {
        let d = patch_matrix(mesh, &w, t);
        let ([g1, _], _) = crate::metric::sym_eigen(&d.scaled_matrix);
        g_max_mesh = g_max_mesh.max(g1);
        data.push(d);
    }

    let mut element_metrics: Vec<Matrix2<f64>> = Vec::with_capacity(card);
    for t in 0..card {
        let geom = mesh.element_geometry(t)?;
        let pullback = data[t].patch_area / (geom.lambda[0] * geom.lambda[1]);
        let spec = optimal_element_spec(
            &data[t].scaled_matrix,
            cfg.tol,
            card,
            pullback,
            g_max_mesh,
            &limits,
        )?;
        element_metrics.push(element_metric(&spec));
    }
    let nodal = nodewise_metric(mesh, &element_metrics)?;
    grade_metric(nodal, chi, cfg.h_iso, cfg.grade)
}

struct Stepper {
    solver: StateSolver,
    evolver: EvolutionSolver,
}

impl Stepper {
    fn new(mesh: &TriMesh, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            solver: StateSolver::new(mesh, &cfg.case.bc)?,
            evolver: EvolutionSolver::new(mesh, cfg.tau, cfg.dt)?,
        })
    }
}

fn run_loop(cfg: &RunConfig, adaptive: bool) -> Result<RunResult> {
    cfg.validate()?;
    if adaptive && cfg.k_start >= cfg.kmax {
        return Err(Error::Parameter(format!(
            "kStart {} must be below kmax {} for adaptive runs",
            cfg.k_start, cfg.kmax
        )));
    }
    let mut mesh = cfg.case.mesh(cfg.mesh_cardinality)?;
    let mut phi = initial_phi(&mesh, cfg);
    let mut stepper = Stepper::new(&mesh, cfg)?;
    let mut state = MultiplierState::default();
    let adapt_params = AdaptParams::default();

    let mut history = Vec::new();
    let mut err_comp;
    let mut err_mesh = 1.0 + cfg.atol;
    let mut prev_compliance: Option<f64> = None;
    let mut calm = 0usize;
    let mut k = 0usize;
    let mut chi = characteristic(&phi, cfg.chi_min)?;
    let mut u = VectorField {
        values: vec![0.0; 2 * mesh.n_vertices()],
    };
    let mut comp = 0.0;

    let keep_going = |calm: usize, err_mesh: f64| {
        if adaptive {
            err_mesh > cfg.atol
        } else {
            calm < CALM_WINDOW
        }
    };

    while keep_going(calm, err_mesh) && k < cfg.kmax {
        let tic = std::time::Instant::now();
        chi = characteristic(&phi, cfg.chi_min)?;
        u = stepper.solver.solve(&chi.values, &cfg.material)?;
        comp = compliance(&mesh, &cfg.case.bc, &u);
        if !comp.is_finite() || comp <= 0.0 {
            return Err(Error::Numerical(format!(
                "compliance {comp} at iteration {k} is not positive"
            )));
        }
        // Pick the volume multiplier so that one evolve step shrinks the
        // material volume by at most the configured rate, and never below
        // the constraint. This keeps the quantized layout from cascading.
        let energies = nodal_energies(&mesh, &u, &chi, &cfg.material)?;
        let vol_now = volume(&mesh, &chi);
        let target = (cfg.alpha * cfg.case.v0).max(vol_now * (1.0 - cfg.volume_rate));
        state.theta = stepper.evolver.multiplier_for_target(
            &mesh,
            &phi,
            &energies,
            cfg.chi_min,
            target,
        )?;
        let field = sensitivity(&mesh, &u, &chi, &cfg.material, &mut state)?;
        let phi_tilde = stepper.evolver.evolve(&phi, &field, state.kappa)?;
        phi = threshold(phi_tilde);

        err_comp = match prev_compliance {
            Some(prev) => (comp - prev).abs() / prev.abs(),
            None => 1.0 + cfg.ctol,
        };
        prev_compliance = Some(comp);
        let vol = vol_now;
        // The material layout is quantized at the nodes, so an isolated
        // small errComp also occurs far from stationarity (an iteration with
        // few or no nodal sign changes repeats the compliance almost
        // exactly). Convergence requires a sustained run of small changes
        // with the volume constraint met.
        let feasible = (vol - cfg.alpha * cfg.case.v0).abs() / cfg.case.v0 <= VOLUME_SLACK;
        if feasible && err_comp <= cfg.ctol {
            calm += 1;
        } else {
            calm = 0;
        }

        let mut record = IterationRecord {
            k,
            compliance: comp,
            volume: vol,
            theta: state.theta,
            err_comp,
            err_mesh: None,
            n_elements: mesh.n_triangles(),
            adapted: false,
            seconds: 0.0,
        };

        if adaptive && k > cfg.k_start && (err_comp < cfg.ctol || k % cfg.k_adapt == 0) {
            let metric = adaptation_metric(&mesh, &phi, &chi, cfg)?;
            let old_card = mesh.n_triangles();
            let adapted = adapt_mesh(&mesh, &metric, &adapt_params)?;
            let new_mesh = adapted.mesh;
            let new_phi = LevelSetField {
                values: project_scalar(&mesh, &phi.values, &new_mesh)?,
            };
            err_mesh = (new_mesh.n_triangles() as f64 - old_card as f64).abs() / old_card as f64;
            record.err_mesh = Some(err_mesh);
            record.adapted = true;
            mesh = new_mesh;
            phi = threshold(new_phi);
            stepper = Stepper::new(&mesh, cfg)?;
            chi = characteristic(&phi, cfg.chi_min)?;
            // The next errComp must compare against a compliance computed on
            // the new mesh, not the pre-adaptation scalar.
            u = stepper.solver.solve(&chi.values, &cfg.material)?;
            comp = compliance(&mesh, &cfg.case.bc, &u);
            prev_compliance = Some(comp);
        }
        record.seconds = tic.elapsed().as_secs_f64();

        if cfg.trace {
            let em = record
                .err_mesh
                .map(|e| format!(" errMesh={e:.3e} card={}", mesh.n_triangles()))
                .unwrap_or_default();
            println!(
                "k={k:4} C={:.6e} V={:.4e} theta={:.4e} errComp={:.3e}{em}",
                record.compliance, record.volume, record.theta, record.err_comp
            );
        }
        history.push(record);
        k += 1;
    }

    let converged = !keep_going(calm, err_mesh);
    Ok(RunResult {
        converged,
        iterations: k,
        compliance: comp,
        volume: volume(&mesh, &chi),
        mesh,
        phi,
        chi,
        u,
        history,
    })
}

/// Evolution on a fixed mesh, stopping on compliance stagnation.
pub fn run_fixed(cfg: &RunConfig) -> Result<RunResult> {
    run_loop(cfg, false)
}

/// Evolution interleaved with anisotropic adaptation, stopping on mesh
/// cardinality stagnation.
pub fn run_adaptive(cfg: &RunConfig) -> Result<RunResult> {
    run_loop(cfg, true)
}

/// Material layout extracted from the sign of the level-set field.
#[derive(Debug, Clone)]
pub struct Layout {
    /// Area of the region where the field is nonnegative, with elementwise
    /// linear interpolation across sign changes.
    pub area: f64,
    /// Zero-isoline polylines, chained from per-element segments.
    pub contours: Vec<Vec<[f64; 2]>>,
}

pub fn extract_layout(mesh: &TriMesh, phi: &LevelSetField) -> Layout {
    let mut area = 0.0;
    let mut segments: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for t in 0..mesh.n_triangles() {
        let verts = mesh.triangle(t);
        let p: Vec<[f64; 2]> = verts
            .iter()
            .map(|&v| {
                let q = mesh.vertex(v);
                [q.x, q.y]
            })
            .collect();
        let f: Vec<f64> = verts.iter().map(|&v| phi.values[v]).collect();
        area += clipped_area(&p, &f);
        if let Some(seg) = zero_segment(&p, &f) {
            segments.push(seg);
        }
    }
    Layout {
        area,
        contours: chain_segments(segments),
    }
}

/// Area of the `f >= 0` part of a triangle, linear interpolation on edges.
fn clipped_area(p: &[[f64; 2]], f: &[f64]) -> f64 {
    let mut poly: Vec<[f64; 2]> = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (inside_i, inside_j) = (f[i] >= 0.0, f[j] >= 0.0);
        if inside_i {
            poly.push(p[i]);
        }
        if inside_i != inside_j {
            let t = f[i] / (f[i] - f[j]);
            poly.push([
                p[i][0] + t * (p[j][0] - p[i][0]),
                p[i][1] + t * (p[j][1] - p[i][1]),
            ]);
        }
    }
    polygon_area(&poly)
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
    }
    0.5 * s.abs()
}

/// Zero-crossing segment of a linear field on a triangle, if the element is
/// cut by the isoline.
fn zero_segment(p: &[[f64; 2]], f: &[f64]) -> Option<([f64; 2], [f64; 2])> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if (f[i] >= 0.0) != (f[j] >= 0.0) {
            let t = f[i] / (f[i] - f[j]);
            pts.push([
                p[i][0] + t * (p[j][0] - p[i][0]),
                p[i][1] + t * (p[j][1] - p[i][1]),
            ]);
        }
    }
    if pts.len() == 2 {
        Some((pts[0], pts[1]))
    } else {
        None
    }
}

/// Greedy chaining of segments into polylines by endpoint matching.
fn chain_segments(segments: Vec<([f64; 2], [f64; 2])>) -> Vec<Vec<[f64; 2]>> {
    use std::collections::HashMap;
    let mut scale = 0.0f64;
    for (a, b) in &segments {
        scale = scale.max(a[0].abs()).max(a[1].abs()).max(b[0].abs()).max(b[1].abs());
    }
    let quant = 1e-9 * scale.max(1.0);
    let key = |p: &[f64; 2]| -> (i64, i64) {
        ((p[0] / quant).round() as i64, (p[1] / quant).round() as i64)
    };
    let mut adj: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        adj.entry(key(a)).or_default().push(i);
        adj.entry(key(b)).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut line = vec![a, b];
        // Extend forward from the tail, then backward from the head.
        for dir in 0..2 {
            loop {
                let end = if dir == 0 { *line.last().unwrap() } else { line[0] };
                let Some(cands) = adj.get(&key(&end)) else { break };
                let next = cands.iter().copied().find(|&i| !used[i]);
                let Some(i) = next else { break };
                used[i] = true;
                let (sa, sb) = segments[i];
                let other = if key(&sa) == key(&end) { sb } else { sa };
                if dir == 0 {
                    line.push(other);
                } else {
                    line.insert(0, other);
                }
            }
        }
        contours.push(line);
    }
    contours
}
