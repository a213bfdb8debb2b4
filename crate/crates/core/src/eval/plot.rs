//! CSV series for plotting:
//!
//! - `<name>_xy.csv`: `x,y`
//! - `<name>_z.csv`: `t,z`
//! - `<name>_error.csv`: `t,ex,ey,ez`, the unaligned position error against
//!   the nearest reference pose, written only when a reference is given.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::metrics::{associate, ASSOCIATION_TOLERANCE};
use crate::error::Result;
use crate::io::{format_g, Pose};

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|v| format_g(v, 9)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the plot series for each named trajectory and returns the paths.
pub fn emit_plot_data(
    trajectories: &[(&str, &[Pose])],
    reference: Option<&[Pose]>,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, poses) in trajectories {
        let xy = dir.join(format!("{name}_xy.csv"));
        write_csv(&xy, "x,y", poses.iter().map(|p| vec![p.position.x, p.position.y]))?;
        let z = dir.join(format!("{name}_z.csv"));
        write_csv(&z, "t,z", poses.iter().map(|p| vec![p.t, p.position.z]))?;
        written.extend([xy, z]);
        if let Some(reference) = reference {
            let error = dir.join(format!("{name}_error.csv"));
            let pairs = associate(poses, reference, ASSOCIATION_TOLERANCE);
            write_csv(
                &error,
                "t,ex,ey,ez",
                pairs.into_iter().map(|(i, j)| {
                    let e = poses[i].position - reference[j].position;
                    vec![poses[i].t, e.x, e.y, e.z]
                }),
            )?;
            written.push(error);
        }
    }
    Ok(written)
}
