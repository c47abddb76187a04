//! Plain-text exports of designs, member tables and run metrics. All floats
//! are written with Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::metrics::RunMetrics;

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Density field as a whitespace-delimited grid, row-major from the bottom
/// row up, with a header carrying the dimensions.
pub fn density_grid_string(values: &[f64], nx: usize, ny: usize) -> Result<String> {
    if values.len() != nx * ny {
        return Err(Error::DimensionMismatch {
            expected: nx * ny,
            got: values.len(),
            context: "density values vs grid dims",
        });
    }
    let mut out = String::new();
    writeln!(
        out,
        "# density grid rows={ny} cols={nx} order=row-major-bottom-up"
    )
    .unwrap();
    for j in 0..ny {
        for i in 0..nx {
            if i > 0 {
                out.push(' ');
            }
            // elements are numbered column-major (j fastest) in the mesh
            write!(out, "{}", values[i * ny + j]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_density_grid(path: &Path, values: &[f64], nx: usize, ny: usize) -> Result<()> {
    write_atomic(path, &density_grid_string(values, nx, ny)?)
}

/// Truss topology as one member per row: end coordinates then area. Members
/// with zero area (or filtered out via `active`) are omitted; an empty
/// topology is refused.
pub fn member_table_string(mesh: &Mesh, values: &[f64], active: Option<&[bool]>) -> Result<String> {
    let dim = mesh.dim();
    let keep: Vec<usize> = (0..mesh.element_count())
        .filter(|&e| values[e] > 0.0 && active.map_or(true, |a| a[e]))
        .collect();
    if keep.is_empty() {
        return Err(Error::DegenerateDesign(
            "no members with positive area remain; refusing to export an empty topology".into(),
        ));
    }
    let mut out = String::new();
    writeln!(
        out,
        "# truss members={} dim={dim} columns=end1..end2..area",
        keep.len()
    )
    .unwrap();
    for e in keep {
        let m = mesh.element(e);
        for &node in &[m[0], m[1]] {
            let c = mesh.node(node);
            for axis in 0..dim {
                write!(out, "{} ", c[axis]).unwrap();
            }
        }
        writeln!(out, "{}", values[e]).unwrap();
    }
    Ok(out)
}

pub fn write_member_table(
    path: &Path,
    mesh: &Mesh,
    values: &[f64],
    active: Option<&[bool]>,
) -> Result<()> {
    write_atomic(path, &member_table_string(mesh, values, active)?)
}

/// Step metrics as comma-separated time series, one row per optimization
/// step; missing diagnostics stay empty.
pub fn metrics_csv_string(metrics: &RunMetrics) -> String {
    let mut out = String::from(
        "step,penal,move_limit,estimate,true_compliance,step_norm,max_change,\
         step_ratio,damped,cos_theta,kkt_angle,n_solve_cum\n",
    );
    for r in &metrics.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_opt(r.penal),
            r.move_limit,
            fmt_opt(r.estimate),
            fmt_opt(r.true_compliance),
            r.step_norm,
            r.max_change,
            fmt_opt(r.step_ratio.filter(|v| v.is_finite())),
            r.damped,
            fmt_opt(r.cos_theta),
            fmt_opt(r.kkt_angle),
            r.n_solve_cum
        )
        .unwrap();
    }
    out
}

pub fn write_metrics_csv(path: &Path, metrics: &RunMetrics) -> Result<()> {
    write_atomic(path, &metrics_csv_string(metrics))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(path, &format!("{text}\n"))
}
