//! VTK XML output: one UnstructuredGrid (.vtu) per field, a ParaView
//! collection (.pvd) plus an RFC-4180 CSV of probe histories for time
//! series. All numbers are written in ASCII with 17 significant digits, so
//! identical inputs produce byte-identical files and re-reading recovers
//! every value exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// VTK cell type id for an arbitrary planar polygon.
const VTK_POLYGON: u8 = 7;

fn render_vtu(mesh: &Mesh, field: &DVector<f64>) -> Result<String> {
    if field.len() != mesh.node_count() {
        return Err(Error::config(format!(
            "field has {} entries for a mesh with {} nodes",
            field.len(),
            mesh.node_count()
        )));
    }
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
    s.push_str("  <UnstructuredGrid>\n");
    let _ = writeln!(
        s,
        "    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
        mesh.node_count(),
        mesh.cell_count()
    );

    s.push_str("      <PointData Scalars=\"Temperature\">\n");
    s.push_str("        <DataArray type=\"Float64\" Name=\"Temperature\" format=\"ascii\">\n");
    for v in field.iter() {
        let _ = writeln!(s, "          {v:.16e}");
    }
    s.push_str("        </DataArray>\n");
    s.push_str("      </PointData>\n");

    s.push_str("      <Points>\n");
    s.push_str("        <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n");
    for n in &mesh.nodes {
        let _ = writeln!(s, "          {:.16e} {:.16e} 0", n.position.x, n.position.y);
    }
    s.push_str("        </DataArray>\n");
    s.push_str("      </Points>\n");

    s.push_str("      <Cells>\n");
    s.push_str("        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
    for cell in &mesh.cells {
        let ids: Vec<String> = cell.vertex_ids.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "          {}", ids.join(" "));
    }
    s.push_str("        </DataArray>\n");
    s.push_str("        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
    let mut offset = 0usize;
    for cell in &mesh.cells {
        offset += cell.vertex_ids.len();
        let _ = writeln!(s, "          {offset}");
    }
    s.push_str("        </DataArray>\n");
    s.push_str("        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
    for _ in &mesh.cells {
        let _ = writeln!(s, "          {VTK_POLYGON}");
    }
    s.push_str("        </DataArray>\n");
    s.push_str("      </Cells>\n");
    s.push_str("    </Piece>\n");
    s.push_str("  </UnstructuredGrid>\n");
    s.push_str("</VTKFile>\n");
    Ok(s)
}

pub fn write_vtu(mesh: &Mesh, field: &DVector<f64>, path: &Path) -> Result<()> {
    let body = render_vtu(mesh, field)?;
    std::fs::write(path, body)?;
    Ok(())
}

/// One probe's history across the kept output times.
#[derive(Clone, Debug)]
pub struct ProbeSeries {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug)]
pub struct TimeSeriesFiles {
    pub pvd: PathBuf,
    pub vtu: Vec<PathBuf>,
    pub csv: PathBuf,
}

/// Writes the full history: `{base}_NNNN.vtu` per state, `{base}.pvd`
/// indexing them by time, and `{base}.csv` with one row per time and one
/// column per probe.
pub fn write_time_series(
    mesh: &Mesh,
    history: &[(f64, DVector<f64>)],
    probes: &[ProbeSeries],
    dir: &Path,
    base: &str,
) -> Result<TimeSeriesFiles> {
    if history.is_empty() {
        return Err(Error::config("time series needs at least one output state"));
    }
    for p in probes {
        if p.values.len() != history.len() {
            return Err(Error::config(format!(
                "probe '{}' has {} values for {} output states",
                p.label,
                p.values.len(),
                history.len()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;

    let mut vtu_paths = Vec::with_capacity(history.len());
    let mut pvd = String::new();
    pvd.push_str("<?xml version=\"1.0\"?>\n");
    pvd.push_str("<VTKFile type=\"Collection\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
    pvd.push_str("  <Collection>\n");
    for (i, (time, field)) in history.iter().enumerate() {
        let name = format!("{base}_{i:04}.vtu");
        let path = dir.join(&name);
        write_vtu(mesh, field, &path)?;
        let _ = writeln!(
            pvd,
            "    <DataSet timestep=\"{time:.16e}\" group=\"\" part=\"0\" file=\"{name}\"/>"
        );
        vtu_paths.push(path);
    }
    pvd.push_str("  </Collection>\n");
    pvd.push_str("</VTKFile>\n");
    let pvd_path = dir.join(format!("{base}.pvd"));
    std::fs::write(&pvd_path, pvd)?;

    let csv_path = dir.join(format!("{base}.csv"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(&csv_path)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", csv_path.display())))?;
    let mut header = vec!["time".to_string()];
    header.extend(probes.iter().map(|p| p.label.clone()));
    w.write_record(&header)
        .and_then(|()| {
            for (i, (time, _)) in history.iter().enumerate() {
                let mut row = vec![format!("{time:.16e}")];
                row.extend(probes.iter().map(|p| format!("{:.16e}", p.values[i])));
                w.write_record(&row)?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::config(format!("cannot write {}: {e}", csv_path.display())))?;

    Ok(TimeSeriesFiles {
        pvd: pvd_path,
        vtu: vtu_paths,
        csv: csv_path,
    })
}
