//! Per-tick trace records and their CSV serialization.
//!
//! One row per control tick, SI units, six significant digits. The
//! `centroid_dev_mm` column is `nan` on ticks without an imaging event;
//! every metric downstream derives from these rows.

use crate::controller::Vec7;
use crate::fileio::ParseError;
use crate::geomath::{Pose, UnitQuaternion, Vec3};

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub t: f64,
    pub q: Vec7,
    pub ee_pose: Pose,
    /// Measured axial contact force (N).
    pub f: f64,
    pub f_d: f64,
    pub e_f: f64,
    pub alpha: f64,
    pub s: f64,
    /// Distance from the path in the plane normal to its tangent (mm).
    pub lateral_dev_mm: f64,
    /// Vessel-centroid offset from the image center column (mm); `nan`
    /// between imaging events.
    pub centroid_dev_mm: f64,
    pub lumen_mm2: f64,
    pub pedal: bool,
}

pub const TRACE_HEADER: &str = "t,q1,q2,q3,q4,q5,q6,q7,px,py,pz,qw,qx,qy,qz,f,f_d,e_f,alpha,s,lateral_dev_mm,centroid_dev_mm,lumen_mm2,pedal";

/// Six significant digits; zero prints as `0`, NaN as `nan`.
fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.5e}")
    }
}

pub fn write_trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 160 + 256);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let p = r.ee_pose.position;
        let q = r.ee_pose.orientation;
        let fields = [
            r.t,
            r.q[0],
            r.q[1],
            r.q[2],
            r.q[3],
            r.q[4],
            r.q[5],
            r.q[6],
            p.x,
            p.y,
            p.z,
            q.eta(),
            q.eps().x,
            q.eps().y,
            q.eps().z,
            r.f,
            r.f_d,
            r.e_f,
            r.alpha,
            r.s,
            r.lateral_dev_mm,
            r.centroid_dev_mm,
            r.lumen_mm2,
        ];
        let mut first = true;
        for v in fields {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt(v));
            first = false;
        }
        out.push(',');
        out.push(if r.pedal { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRecord>, ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, "empty trace file"))?;
    if header.trim() != TRACE_HEADER {
        return Err(ParseError::new(
            1,
            format!("unexpected trace schema: `{header}`"),
        ));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 24 {
            return Err(ParseError::new(
                line_no,
                format!("expected 24 columns, found {}", fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64, ParseError> {
            fields[k]
                .parse::<f64>()
                .map_err(|_| ParseError::new(line_no, format!("invalid number `{}`", fields[k])))
        };
        let mut q = Vec7::zeros();
        for i in 0..7 {
            q[i] = num(1 + i)?;
        }
        let pose = Pose::new(
            Vec3::new(num(8)?, num(9)?, num(10)?),
            UnitQuaternion::new(num(11)?, Vec3::new(num(12)?, num(13)?, num(14)?)),
        );
        let pedal = match fields[23] {
            "0" => false,
            "1" => true,
            other => return Err(ParseError::new(line_no, format!("invalid pedal `{other}`"))),
        };
        records.push(TraceRecord {
            t: num(0)?,
            q,
            ee_pose: pose,
            f: num(15)?,
            f_d: num(16)?,
            e_f: num(17)?,
            alpha: num(18)?,
            s: num(19)?,
            lateral_dev_mm: num(20)?,
            centroid_dev_mm: num(21)?,
            lumen_mm2: num(22)?,
            pedal,
        });
    }
    Ok(records)
}
