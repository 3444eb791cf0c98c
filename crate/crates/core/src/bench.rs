//! Built-in benchmark definitions and structured mesh generation.

use crate::error::{Error, Result};
use crate::fem::{BoundaryConditions, DirichletSpec, PointConstraint, TractionSpec};
use crate::mesh::{BoundaryEdge, TriMesh};

/// Axis-aligned rectangular design domain.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn diameter(&self) -> f64 {
        (self.width() * self.width() + self.height() * self.height()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Labelled portion of one rectangle side, in the side's axis coordinate.
#[derive(Debug, Clone, Copy)]
pub struct SegmentSpec {
    pub side: Side,
    pub range: [f64; 2],
    pub label: i32,
}

/// Label for boundary not claimed by any segment (plain Neumann).
pub const FREE_BOUNDARY_LABEL: i32 = 9;

/// Uniform right-triangle grid over `rect` whose cardinality is the closest
/// achievable `2*nx*ny` to `target`, with aspect-preserving `nx, ny`.
///
/// `x_breaks`/`y_breaks` force grid lines at given coordinates so that
/// labelled boundary segments start and end exactly on mesh vertices.
pub fn generate_structured_mesh(
    rect: Rect,
    target: usize,
    x_breaks: &[f64],
    y_breaks: &[f64],
    segments: &[SegmentSpec],
) -> Result<TriMesh> {
    if target < 2 {
        return Err(Error::Parameter("target cardinality must be >= 2".into()));
    }
    let aspect = rect.width() / rect.height();
    let ny = ((target as f64 / (2.0 * aspect)).sqrt().round() as usize).max(1);
    let nx = ((aspect * ny as f64).round() as usize).max(1);
    let xs = axis_lines(rect.x0, rect.x1, nx, x_breaks);
    let ys = axis_lines(rect.y0, rect.y1, ny, y_breaks);
    structured_from_lines(&xs, &ys, segments)
}

/// Grid lines: uniform partition of each sub-interval between breakpoints,
/// with per-interval counts chosen to approximate the global spacing.
fn axis_lines(a: f64, b: f64, n: usize, breaks: &[f64]) -> Vec<f64> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let h = (b - a) / n as f64;
    let mut lines = Vec::new();
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let m = (((hi - lo) / h).round() as usize).max(1);
        for k in 0..m {
            lines.push(lo + (hi - lo) * k as f64 / m as f64);
        }
    }
    lines.push(b);
    lines
}

fn structured_from_lines(xs: &[f64], ys: &[f64], segments: &[SegmentSpec]) -> Result<TriMesh> {
    let (nx, ny) = (xs.len(), ys.len());
    let idx = |i: usize, j: usize| j * nx + i;
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([xs[i], ys[j]]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let rect = Rect {
        x0: xs[0],
        x1: xs[nx - 1],
        y0: ys[0],
        y1: ys[ny - 1],
    };

    let mut boundary_edges = Vec::new();
    for i in 0..nx - 1 {
        boundary_edges.push(labelled_edge(idx(i, 0), idx(i + 1, 0), &vertices, &rect, segments));
        boundary_edges.push(labelled_edge(
            idx(i, ny - 1),
            idx(i + 1, ny - 1),
            &vertices,
            &rect,
            segments,
        ));
    }
    for j in 0..ny - 1 {
        boundary_edges.push(labelled_edge(idx(0, j), idx(0, j + 1), &vertices, &rect, segments));
        boundary_edges.push(labelled_edge(
            idx(nx - 1, j),
            idx(nx - 1, j + 1),
            &vertices,
            &rect,
            segments,
        ));
    }

    let corner_flags = corner_flags_from_boundary(&vertices, &boundary_edges);
    TriMesh::new(vertices, triangles, boundary_edges, corner_flags)
}

fn labelled_edge(
    a: usize,
    b: usize,
    vertices: &[[f64; 2]],
    rect: &Rect,
    segments: &[SegmentSpec],
) -> BoundaryEdge {
    let mx = 0.5 * (vertices[a][0] + vertices[b][0]);
    let my = 0.5 * (vertices[a][1] + vertices[b][1]);
    let tol = 1e-9 * (rect.width() + rect.height());
    let mut label = FREE_BOUNDARY_LABEL;
    for s in segments {
        let (on_side, coord) = match s.side {
            Side::Left => ((mx - rect.x0).abs() <= tol, my),
            Side::Right => ((mx - rect.x1).abs() <= tol, my),
            Side::Bottom => ((my - rect.y0).abs() <= tol, mx),
            Side::Top => ((my - rect.y1).abs() <= tol, mx),
        };
        if on_side && coord >= s.range[0] - tol && coord <= s.range[1] + tol {
            label = s.label;
            break;
        }
    }
    BoundaryEdge {
        vertices: [a, b],
        label,
    }
}

/// Corners: boundary vertices where the incident boundary edges change label
/// or direction, plus any vertex of boundary valence other than 2.
pub fn corner_flags_from_boundary(vertices: &[[f64; 2]], edges: &[BoundaryEdge]) -> Vec<bool> {
    let n_vertices = vertices.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
    for (e, be) in edges.iter().enumerate() {
        incident[be.vertices[0]].push(e);
        incident[be.vertices[1]].push(e);
    }
    let mut flags = vec![false; n_vertices];
    for v in 0..n_vertices {
        let inc = &incident[v];
        if inc.is_empty() {
            continue;
        }
        if inc.len() != 2 {
            flags[v] = true;
            continue;
        }
        let (e1, e2) = (&edges[inc[0]], &edges[inc[1]]);
        if e1.label != e2.label {
            flags[v] = true;
            continue;
        }
        let dir = |be: &BoundaryEdge| {
            let [a, b] = be.vertices;
            let (p, q) = (vertices[a], vertices[b]);
            [q[0] - p[0], q[1] - p[1]]
        };
        let (d1, d2) = (dir(e1), dir(e2));
        let cross = d1[0] * d2[1] - d1[1] * d2[0];
        let scale = (d1[0].hypot(d1[1])) * (d2[0].hypot(d2[1]));
        flags[v] = cross.abs() > 1e-9 * scale;
    }
    flags
}

/// A built-in benchmark: geometry, labels, boundary conditions and defaults.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub domain: Rect,
    pub x_breaks: Vec<f64>,
    pub y_breaks: Vec<f64>,
    pub segments: Vec<SegmentSpec>,
    pub bc: BoundaryConditions,
    pub v0: f64,
}

impl BenchmarkCase {
    pub fn mesh(&self, target: usize) -> Result<TriMesh> {
        generate_structured_mesh(self.domain, target, &self.x_breaks, &self.y_breaks, &self.segments)
    }
}

pub const LABEL_DIRICHLET: i32 = 1;
pub const LABEL_TRACTION: i32 = 2;

/// Central loaded cantilever: (0,2)x(0,1), clamped at x = 0, downward
/// traction on x = 2, 0.45 <= y <= 0.55.
pub fn clc() -> BenchmarkCase {
    let domain = Rect {
        x0: 0.0,
        x1: 2.0,
        y0: 0.0,
        y1: 1.0,
    };
    BenchmarkCase {
        name: "CLC",
        domain,
        x_breaks: vec![],
        y_breaks: vec![0.45, 0.55],
        segments: vec![
            SegmentSpec {
                side: Side::Left,
                range: [0.0, 1.0],
                label: LABEL_DIRICHLET,
            },
            SegmentSpec {
                side: Side::Right,
                range: [0.45, 0.55],
                label: LABEL_TRACTION,
            },
        ],
        bc: BoundaryConditions {
            dirichlet: vec![DirichletSpec {
                label: LABEL_DIRICHLET,
                components: [true, true],
                values: [0.0, 0.0],
            }],
            traction: vec![TractionSpec {
                label: LABEL_TRACTION,
                traction: [0.0, -5.0],
            }],
            point_constraints: vec![],
        },
        v0: domain.area(),
    }
}

/// Central-bottom loaded bridge: (-100,100)x(0,120), rollers (u2 = 0) on the
/// two bottom corners, traction on the bottom centre. A single u1 pin at the
/// load centre removes the remaining horizontal rigid mode.
pub fn cblb() -> BenchmarkCase {
    let domain = Rect {
        x0: -100.0,
        x1: 100.0,
        y0: 0.0,
        y1: 120.0,
    };
    BenchmarkCase {
        name: "CBLB",
        domain,
        x_breaks: vec![-90.0, -10.0, 10.0, 90.0],
        y_breaks: vec![],
        segments: vec![
            SegmentSpec {
                side: Side::Bottom,
                range: [-100.0, -90.0],
                label: LABEL_DIRICHLET,
            },
            SegmentSpec {
                side: Side::Bottom,
                range: [90.0, 100.0],
                label: LABEL_DIRICHLET,
            },
            SegmentSpec {
                side: Side::Bottom,
                range: [-10.0, 10.0],
                label: LABEL_TRACTION,
            },
        ],
        bc: BoundaryConditions {
            dirichlet: vec![DirichletSpec {
                label: LABEL_DIRICHLET,
                components: [false, true],
                values: [0.0, 0.0],
            }],
            traction: vec![TractionSpec {
                label: LABEL_TRACTION,
                traction: [0.0, -5.0],
            }],
            point_constraints: vec![PointConstraint {
                point: [0.0, 0.0],
                components: [true, false],
            }],
        },
        v0: domain.area(),
    }
}

/// Central loaded short cantilever: (0,160)x(0,128), clamped at x = 0,
/// traction on x = 160, 60 <= y <= 68.
pub fn clsc() -> BenchmarkCase {
    let domain = Rect {
        x0: 0.0,
        x1: 160.0,
        y0: 0.0,
        y1: 128.0,
    };
    BenchmarkCase {
        name: "CLSC",
        domain,
        x_breaks: vec![],
        y_breaks: vec![60.0, 68.0],
        segments: vec![
            SegmentSpec {
                side: Side::Left,
                range: [0.0, 128.0],
                label: LABEL_DIRICHLET,
            },
            SegmentSpec {
                side: Side::Right,
                range: [60.0, 68.0],
                label: LABEL_TRACTION,
            },
        ],
        bc: BoundaryConditions {
            dirichlet: vec![DirichletSpec {
                label: LABEL_DIRICHLET,
                components: [true, true],
                values: [0.0, 0.0],
            }],
            traction: vec![TractionSpec {
                label: LABEL_TRACTION,
                traction: [0.0, -5.0],
            }],
            point_constraints: vec![],
        },
        v0: domain.area(),
    }
}

pub fn by_name(name: &str) -> Option<BenchmarkCase> {
    match name.to_ascii_uppercase().as_str() {
        "CLC" => Some(clc()),
        "CBLB" => Some(cblb()),
        "CLSC" => Some(clsc()),
        _ => None,
    }
}
