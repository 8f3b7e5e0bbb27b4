//! CSV export of recorded trajectories.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

use super::integrate::Trajectory;

pub fn csv_header(n: usize, channels: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for name in ["theta", "omega", "p"] {
        cols.extend((1..=n).map(|i| format!("{name}_{i}")));
    }
    cols.push("ell".into());
    cols.extend((1..=channels).map(|m| format!("tau_{m}")));
    cols.join(",")
}

/// One row per recorded sample; `ell` is written 1-based.
pub fn write_csv(traj: &Trajectory, mut out: impl Write) -> Result<()> {
    let channels = traj.taus.first().map_or(0, Vec::len);
    writeln!(out, "{}", csv_header(traj.n, channels))?;
    for r in 0..traj.len() {
        write!(out, "{}", traj.times[r])?;
        for v in &traj.states[r] {
            write!(out, ",{v}")?;
        }
        write!(out, ",{}", traj.ell[r] + 1)?;
        for v in &traj.taus[r] {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_csv_file(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(traj, &mut w)?;
    w.flush()?;
    Ok(())
}
