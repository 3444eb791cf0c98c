//! P1 field transfer between meshes of the same domain: point location via a
//! uniform background grid, and pointwise interpolation.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Barycentric tolerance for containment tests.
const BARY_EPS: f64 = 1e-9;

/// Uniform-grid point locator over a mesh.
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    min: Vector2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Triangle ids per grid cell, each list sorted ascending.
    cells: Vec<Vec<usize>>,
    pub boundary_tolerance: f64,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        Self::with_tolerance(mesh, 1e-8)
    }

    pub fn with_tolerance(mesh: &'a TriMesh, boundary_tolerance: f64) -> Self {
        let verts = mesh.vertices();
        let mut min = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in verts {
            min.x = min.x.min(v[0]);
            min.y = min.y.min(v[1]);
            max.x = max.x.max(v[0]);
            max.y = max.y.max(v[1]);
        }
        let extent = (max - min).amax().max(1e-300);
        let n_target = (mesh.n_triangles() as f64).sqrt().ceil().max(1.0) as usize;
        let cell = extent / n_target as f64;
        let nx = (((max.x - min.x) / cell).ceil() as usize).max(1);
        let ny = (((max.y - min.y) / cell).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for t in 0..mesh.n_triangles() {
            let [a, b, c] = mesh.triangle(t);
            let xs = [verts[a][0], verts[b][0], verts[c][0]];
            let ys = [verts[a][1], verts[b][1], verts[c][1]];
            let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            let i0 = (((x0 - min.x) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((x1 - min.x) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((y0 - min.y) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((y1 - min.y) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(t);
                }
            }
        }
        Self {
            mesh,
            min,
            cell,
            nx,
            ny,
            cells,
            boundary_tolerance,
        }
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    fn barycentric(&self, t: usize, p: Vector2<f64>) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangle(t);
        let (pa, pb, pc) = (self.mesh.vertex(a), self.mesh.vertex(b), self.mesh.vertex(c));
        let det = (pb - pa).perp(&(pc - pa));
        let wa = (pb - p).perp(&(pc - p)) / det;
        let wb = (pc - p).perp(&(pa - p)) / det;
        [wa, wb, 1.0 - wa - wb]
    }

    /// Locates `p`, returning the containing element and barycentric weights.
    /// Ties at shared vertices/edges resolve to the lowest element id.
    /// Points marginally outside the domain snap to the nearest element
    /// within `boundary_tolerance`.
    pub fn locate(&self, p: Vector2<f64>) -> Result<(usize, [f64; 3])> {
        let i = (((p.x - self.min.x) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let j = (((p.y - self.min.y) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        // Expanding ring search around the home cell.
        let max_ring = self.nx.max(self.ny);
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for ring in 0..=max_ring {
            let mut seen_any = false;
            let mut hit: Option<(usize, [f64; 3])> = None;
            self.for_ring(i, j, ring, |cell| {
                seen_any = true;
                for &t in cell {
                    let w = self.barycentric(t, p);
                    let deficit = -w.iter().cloned().fold(f64::INFINITY, f64::min);
                    if deficit <= BARY_EPS {
                        if hit.is_none_or(|(prev, _)| t < prev) {
                            hit = Some((t, w));
                        }
                    } else if best.as_ref().is_none_or(|(d, _, _)| deficit < *d) {
                        best = Some((deficit, t, w));
                    }
                }
            });
            if let Some((t, w)) = hit {
                return Ok((t, w));
            }
            // One extra ring after the first non-empty one catches points
            // lying on cell borders.
            if ring >= 2 && seen_any && best.is_some() {
                break;
            }
        }
        // Snap: accept the least-violating element if the physical distance
        // to it is within tolerance.
        if let Some((_, t, w)) = best {
            let clamped = clamp_bary(w);
            let [a, b, c] = self.mesh.triangle(t);
            let q = self.mesh.vertex(a) * clamped[0]
                + self.mesh.vertex(b) * clamped[1]
                + self.mesh.vertex(c) * clamped[2];
            if (q - p).norm() <= self.boundary_tolerance {
                return Ok((t, clamped));
            }
        }
        // Exhaustive fallback before giving up (points far from the home cell
        // of a highly graded mesh).
        let mut best_global: Option<(f64, usize, [f64; 3])> = None;
        for t in 0..self.mesh.n_triangles() {
            let w = self.barycentric(t, p);
            let deficit = -w.iter().cloned().fold(f64::INFINITY, f64::min);
            if deficit <= BARY_EPS {
                return Ok((t, w));
            }
            if best_global.as_ref().is_none_or(|(d, _, _)| deficit < *d) {
                best_global = Some((deficit, t, w));
            }
        }
        if let Some((_, t, w)) = best_global {
            let clamped = clamp_bary(w);
            let [a, b, c] = self.mesh.triangle(t);
            let q = self.mesh.vertex(a) * clamped[0]
                + self.mesh.vertex(b) * clamped[1]
                + self.mesh.vertex(c) * clamped[2];
            if (q - p).norm() <= self.boundary_tolerance {
                return Ok((t, clamped));
            }
        }
        Err(Error::Location { x: p.x, y: p.y })
    }

    fn for_ring<F: FnMut(&Vec<usize>)>(&self, ci: usize, cj: usize, ring: usize, mut f: F) {
        let (ci, cj, ring) = (ci as isize, cj as isize, ring as isize);
        for dj in -ring..=ring {
            for di in -ring..=ring {
                if di.abs().max(dj.abs()) != ring {
                    continue;
                }
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                    continue;
                }
                f(&self.cells[j as usize * self.nx + i as usize]);
            }
        }
    }
}

fn clamp_bary(w: [f64; 3]) -> [f64; 3] {
    let mut c = [w[0].max(0.0), w[1].max(0.0), w[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    for x in &mut c {
        *x /= s;
    }
    c
}

/// Pointwise P1 interpolation of a scalar field onto a new mesh.
pub fn project_scalar(old_mesh: &TriMesh, values: &[f64], new_mesh: &TriMesh) -> Result<Vec<f64>> {
    let locator = PointLocator::new(old_mesh);
    let mut out = Vec::with_capacity(new_mesh.n_vertices());
    for v in 0..new_mesh.n_vertices() {
        let (t, w) = locator.locate(new_mesh.vertex(v))?;
        let [a, b, c] = old_mesh.triangle(t);
        out.push(w[0] * values[a] + w[1] * values[b] + w[2] * values[c]);
    }
    Ok(out)
}

/// Componentwise projection of an interleaved 2-vector field.
pub fn project_vector(old_mesh: &TriMesh, values: &[f64], new_mesh: &TriMesh) -> Result<Vec<f64>> {
    let locator = PointLocator::new(old_mesh);
    let mut out = Vec::with_capacity(2 * new_mesh.n_vertices());
    for v in 0..new_mesh.n_vertices() {
        let (t, w) = locator.locate(new_mesh.vertex(v))?;
        let [a, b, c] = old_mesh.triangle(t);
        for comp in 0..2 {
            out.push(
                w[0] * values[2 * a + comp] + w[1] * values[2 * b + comp] + w[2] * values[2 * c + comp],
            );
        }
    }
    Ok(out)
}
