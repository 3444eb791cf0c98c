//! Legacy VTK unstructured-grid ASCII export/import, SVG contour export and
//! the convergence history CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::corner_flags_from_boundary;
use crate::driver::{IterationRecord, Layout, RunResult};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, TriMesh};

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Named nodal or per-element scalar fields attached to a VTK export.
#[derive(Default)]
pub struct VtkFields<'a> {
    pub point_scalars: Vec<(&'a str, &'a [f64])>,
    pub point_vectors: Vec<(&'a str, &'a [f64])>,
    pub cell_scalars: Vec<(&'a str, &'a [f64])>,
}

/// Legacy ASCII unstructured grid: triangles as cell type 5, boundary edges
/// as cell type 3 carrying their label in cell data.
pub fn vtk_string(mesh: &TriMesh, fields: &VtkFields) -> String {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let nb = mesh.boundary_edges().len();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    s.push_str("triangular mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in 0..nv {
        let p = mesh.vertex(v);
        let _ = writeln!(s, "{} {} 0", p.x, p.y);
    }
    let _ = writeln!(s, "CELLS {} {}", nt + nb, 4 * nt + 3 * nb);
    for t in 0..nt {
        let [a, b, c] = mesh.triangle(t);
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    for be in mesh.boundary_edges() {
        let _ = writeln!(s, "2 {} {}", be.vertices[0], be.vertices[1]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", nt + nb);
    for _ in 0..nt {
        s.push_str("5\n");
    }
    for _ in 0..nb {
        s.push_str("3\n");
    }

    let _ = writeln!(s, "CELL_DATA {}", nt + nb);
    s.push_str("SCALARS boundary_label int 1\nLOOKUP_TABLE default\n");
    for _ in 0..nt {
        s.push_str("0\n");
    }
    for be in mesh.boundary_edges() {
        let _ = writeln!(s, "{}", be.label);
    }
    for (name, data) in &fields.cell_scalars {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for t in 0..nt {
            let _ = writeln!(s, "{}", data[t]);
        }
        for _ in 0..nb {
            s.push_str("0\n");
        }
    }

    if !fields.point_scalars.is_empty() || !fields.point_vectors.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, data) in &fields.point_scalars {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in 0..nv {
                let _ = writeln!(s, "{}", data[v]);
            }
        }
        for (name, data) in &fields.point_vectors {
            let _ = writeln!(s, "VECTORS {name} double");
            for v in 0..nv {
                let _ = writeln!(s, "{} {} 0", data[2 * v], data[2 * v + 1]);
            }
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &TriMesh, fields: &VtkFields) -> Result<()> {
    write_file(path, &vtk_string(mesh, fields))
}

/// Reads a mesh written by [`vtk_string`]. Only the connectivity, coordinates
/// and the `boundary_label` cell field are recovered.
pub fn read_vtk(text: &str) -> Result<TriMesh> {
    let mut tokens = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .collect::<Vec<_>>()
        .into_iter();
    let err = |line: usize, msg: String| Error::Parse { line, msg };
    fn take<'a>(
        it: &mut impl Iterator<Item = (usize, &'a str)>,
        expect: &str,
    ) -> Result<(usize, &'a str)> {
        it.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, wanted {expect}"),
        })
    }
    macro_rules! next {
        ($e:expr) => {
            take(&mut tokens, $e)
        };
    }

    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut lines: Vec<[usize; 2]> = Vec::new();
    let mut cell_sizes: Vec<usize> = Vec::new();
    let mut raw_cells: Vec<Vec<usize>> = Vec::new();
    let mut labels: Vec<i32> = Vec::new();

    loop {
        let Some((_line, tok)) = tokens.next() else { break };
        match tok {
            "POINTS" => {
                let (l, n) = next!("point count")?;
                let n: usize = n.parse().map_err(|_| err(l, "bad point count".into()))?;
                let _dtype = next!("point dtype")?;
                for _ in 0..n {
                    let (lx, x) = next!("x")?;
                    let (_, y) = next!("y")?;
                    let (_, _z) = next!("z")?;
                    let x: f64 = x.parse().map_err(|_| err(lx, "bad coordinate".into()))?;
                    let y: f64 = y.parse().map_err(|_| err(lx, "bad coordinate".into()))?;
                    vertices.push([x, y]);
                }
            }
            "CELLS" => {
                let (l, n) = next!("cell count")?;
                let n: usize = n.parse().map_err(|_| err(l, "bad cell count".into()))?;
                let _total = next!("cell total")?;
                for _ in 0..n {
                    let (l, sz) = next!("cell size")?;
                    let sz: usize = sz.parse().map_err(|_| err(l, "bad cell size".into()))?;
                    let mut cell = Vec::with_capacity(sz);
                    for _ in 0..sz {
                        let (l, v) = next!("cell vertex")?;
                        cell.push(v.parse().map_err(|_| err(l, "bad vertex index".into()))?);
                    }
                    cell_sizes.push(sz);
                    raw_cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let (l, n) = next!("type count")?;
                let n: usize = n.parse().map_err(|_| err(l, "bad type count".into()))?;
                if n != raw_cells.len() {
                    return Err(err(l, "CELL_TYPES count differs from CELLS".into()));
                }
                for cell in raw_cells.drain(..) {
                    let (l, ty) = next!("cell type")?;
                    match ty {
                        "5" => {
                            if cell.len() != 3 {
                                return Err(err(l, "triangle cell must have 3 vertices".into()));
                            }
                            triangles.push([cell[0], cell[1], cell[2]]);
                        }
                        "3" => {
                            if cell.len() != 2 {
                                return Err(err(l, "line cell must have 2 vertices".into()));
                            }
                            lines.push([cell[0], cell[1]]);
                        }
                        other => return Err(err(l, format!("unsupported cell type {other}"))),
                    }
                }
            }
            "SCALARS" => {
                let (_, name) = next!("field name")?;
                let is_label = name == "boundary_label";
                let _dtype = next!("dtype")?;
                let _comps = next!("components")?;
                let (_, _lut) = next!("LOOKUP_TABLE")?;
                let (_, _lutname) = next!("table name")?;
                if is_label {
                    for i in 0..cell_sizes.len() {
                        let (l, v) = next!("field value")?;
                        if cell_sizes[i] == 2 {
                            labels.push(v.parse().map_err(|_| err(l, "bad label".into()))?);
                        }
                    }
                }
                // Other fields are plain numbers; the catch-all arm skips them.
            }
            // Counts and unreferenced sections are skipped token by token.
            _ => {}
        }
    }

    if labels.len() != lines.len() {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "found {} boundary labels for {} line cells",
                labels.len(),
                lines.len()
            ),
        });
    }
    let boundary_edges: Vec<BoundaryEdge> = lines
        .iter()
        .zip(&labels)
        .map(|(&vertices, &label)| BoundaryEdge { vertices, label })
        .collect();
    let corners = corner_flags_from_boundary(&vertices, &boundary_edges);
    TriMesh::new(vertices, triangles, boundary_edges, corners)
}

pub fn read_vtk_file(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_vtk(&text)
}

/// Convergence history with one row per completed iteration.
pub fn history_csv(history: &[IterationRecord], v0: f64) -> String {
    let mut s = String::from(
        "iter,compliance,volume_fraction,cardinality,errComp,errMesh,adapted,seconds\n",
    );
    for r in history {
        let em = r.err_mesh.map(|e| format!("{e}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.compliance,
            r.volume / v0,
            r.n_elements,
            r.err_comp,
            em,
            r.adapted as u8,
            r.seconds
        );
    }
    s
}

/// Zero-isoline polylines in domain coordinates, y flipped so the SVG renders
/// with the usual mathematical orientation.
pub fn svg_string(layout: &Layout, mesh: &TriMesh) -> String {
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertex(v);
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (w, h) = ((x1 - x0).max(1e-12), (y1 - y0).max(1e-12));
    let stroke = 0.004 * w.max(h);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0} {y0} {w} {h}\">\n"
    );
    for line in &layout.contours {
        if line.len() < 2 {
            continue;
        }
        s.push_str("<polyline fill=\"none\" stroke=\"black\" stroke-width=\"");
        let _ = write!(s, "{stroke}\" points=\"");
        for p in line {
            let _ = write!(s, "{},{} ", p[0], y0 + y1 - p[1]);
        }
        s.push_str("\"/>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `history.csv`, `mesh.vtk`, `layout.vtk` and `boundary.svg`.
pub fn write_outputs(result: &RunResult, layout: &Layout, v0: f64, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_file(&out_dir.join("history.csv"), &history_csv(&result.history, v0))?;
    write_vtk(&out_dir.join("mesh.vtk"), &result.mesh, &VtkFields::default())?;
    let fields = VtkFields {
        point_scalars: vec![("phi", &result.phi.values), ("chi", &result.chi.values)],
        point_vectors: vec![("displacement", &result.u.values)],
        cell_scalars: vec![],
    };
    write_vtk(&out_dir.join("layout.vtk"), &result.mesh, &fields)?;
    write_file(&out_dir.join("boundary.svg"), &svg_string(layout, &result.mesh))
}
