//! Plain-text writers for the laboratory's on-disk outputs: JSON-lines
//! collision logs, CSV series, velocity-field tables with JSON metadata,
//! ensemble snapshots, and pretty-printed JSON reports.
//!
//! Every writer is deterministic. Floats go through Rust's shortest
//! round-trip `{}` formatting and rows follow a fixed order, so identical
//! in-memory states produce byte-identical files on any platform. No CSV
//! cell ever contains a comma, quote, or newline, so no quoting layer is
//! needed and the files stay trivially parseable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev::EnergySample;
use crate::blobs::BlobEnsemble;
use crate::error::Result;
use crate::hard_sphere::{CollisionRecord, ParticleConfig};
use crate::homogeneous::VelocityField;
use crate::reversal::MomentSample;
use crate::torus::Vec3;

/// Writes a collision event log as JSON Lines: one record object per line,
/// in event order.
pub fn write_event_log(path: impl AsRef<Path>, events: &[CollisionRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        let line = serde_json::to_string(event)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes particle states under the header `t,particle,qx,qy,qz,wx,wy,wz`.
/// Each configuration contributes one row per particle at its own time, so
/// a whole trajectory's worth of snapshots shares a single file.
pub fn write_snapshots(path: impl AsRef<Path>, snapshots: &[ParticleConfig]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,particle,qx,qy,qz,wx,wy,wz")?;
    for config in snapshots {
        let t = config.time();
        for (index, (q, w)) in config.positions().iter().zip(config.velocities()).enumerate() {
            writeln!(
                out,
                "{t},{index},{},{},{},{},{},{}",
                q.x(),
                q.y(),
                q.z(),
                w.x,
                w.y,
                w.z
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes per-sample particle states of one or more ensemble stages under
/// the header `sample,particle,t,qx,qy,qz,wx,wy,wz`. Stage times ride in
/// the `t` column, so successive stages of one flow share a single file.
pub fn write_ensemble_snapshots(path: impl AsRef<Path>, stages: &[BlobEnsemble]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "sample,particle,t,qx,qy,qz,wx,wy,wz")?;
    for stage in stages {
        for (sample, config) in stage.samples().iter().enumerate() {
            let t = config.time();
            for (index, (q, w)) in config.positions().iter().zip(config.velocities()).enumerate()
            {
                writeln!(
                    out,
                    "{sample},{index},{t},{},{},{},{},{},{}",
                    q.x(),
                    q.y(),
                    q.z(),
                    w.x,
                    w.y,
                    w.z
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes an energy audit series under the header `t,kinetic,potential,total`.
pub fn write_energy_series(path: impl AsRef<Path>, samples: &[EnergySample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,kinetic,potential,total")?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.t, s.kinetic, s.potential, s.total)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a moment-and-entropy series under the header
/// `t,mass,px,py,pz,energy,H`.
pub fn write_moment_series(path: impl AsRef<Path>, samples: &[MomentSample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,mass,px,py,pz,energy,H")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.mass, s.px, s.py, s.pz, s.energy, s.h
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Grid metadata stored as a JSON header next to a field value table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldHeader {
    /// Nodes per velocity axis.
    pub m: usize,
    /// Half-width of the cubic velocity domain.
    pub v_max: f64,
    /// Node spacing along each axis.
    pub delta: f64,
    /// Time stamp carried by the field.
    pub time: f64,
    /// Per-axis `[first node, last node]` coordinates.
    pub extents: [[f64; 2]; 3],
}

/// Writes a velocity field as two files: a CSV value table under the header
/// `vx,vy,vz,f` (row-major over the cubic node grid) and a JSON metadata
/// header describing the grid extents and time.
pub fn write_field_snapshot(
    csv_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
    field: &VelocityField,
) -> Result<()> {
    let m = field.m();
    let span = [field.axis_coord(0), field.axis_coord(m - 1)];
    let header = FieldHeader {
        m,
        v_max: field.v_max(),
        delta: field.delta(),
        time: field.time(),
        extents: [span, span, span],
    };
    write_json_pretty(json_path, &header)?;

    let mut out = BufWriter::new(File::create(csv_path)?);
    writeln!(out, "vx,vy,vz,f")?;
    let values = field.values();
    for i in 0..m {
        let vx = field.axis_coord(i);
        for j in 0..m {
            let vy = field.axis_coord(j);
            for k in 0..m {
                let vz = field.axis_coord(k);
                writeln!(out, "{vx},{vy},{vz},{}", values[field.flat_index(i, j, k)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// One probe point of a collision-operator scan: both collision integrals
/// and the mean-field acceleration magnitude evaluated at the same phase
/// point.
#[derive(Clone, Copy, Debug)]
pub struct OperatorScanRow {
    pub r: Vec3,
    pub v: Vec3,
    pub st_enskog: f64,
    pub st_boltzmann: f64,
    pub vlasov: f64,
}

/// Writes operator probe values under the header
/// `r_x,r_y,r_z,v_x,v_y,v_z,st_enskog,st_boltzmann,vlasov`.
pub fn write_operator_scan(path: impl AsRef<Path>, rows: &[OperatorScanRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "r_x,r_y,r_z,v_x,v_y,v_z,st_enskog,st_boltzmann,vlasov")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.r.x,
            row.r.y,
            row.r.z,
            row.v.x,
            row.v.y,
            row.v.z,
            row.st_enskog,
            row.st_boltzmann,
            row.vlasov
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Serializes any report as pretty-printed JSON with a trailing newline.
pub fn write_json_pretty<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
