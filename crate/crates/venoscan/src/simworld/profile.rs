//! Replayed operator wrench profiles.
//!
//! A profile is a piecewise-linear force timeline in the probe frame plus a
//! pedal flag: `fx` pushes along the path direction, `fy` laterally, `fz`
//! along the pressing axis (positive presses deeper). Pedal changes take
//! effect at the row time and hold until the next row. Profiles should lead
//! in with a few idle seconds so the probe lands before interaction starts.

use crate::fileio::{content_lines, parse_floats, ParseError};

#[derive(Debug, Clone, Copy)]
pub struct ProfileRow {
    pub t: f64,
    pub pedal: bool,
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

#[derive(Debug, Clone)]
pub struct OperatorProfile {
    rows: Vec<ProfileRow>,
}

impl OperatorProfile {
    pub fn new(rows: Vec<ProfileRow>) -> Result<Self, ParseError> {
        if rows.is_empty() {
            return Err(ParseError::new(1, "profile has no rows"));
        }
        for (i, pair) in rows.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return Err(ParseError::new(
                    i + 2,
                    "profile times must be strictly increasing",
                ));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.fx.abs() > 30.0 || r.fy.abs() > 30.0 || r.fz.abs() > 30.0 {
                return Err(ParseError::new(i + 1, "operator force outside +-30 N"));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ProfileRow] {
        &self.rows
    }

    pub fn duration(&self) -> f64 {
        self.rows.last().map(|r| r.t).unwrap_or(0.0)
    }

    /// Samples the profile: forces interpolate linearly between rows and
    /// clamp at the ends; the pedal holds the most recent row's value.
    pub fn sample(&self, t: f64) -> ProfileRow {
        let rows = &self.rows;
        if t <= rows[0].t {
            return ProfileRow { t, ..rows[0] };
        }
        if t >= rows[rows.len() - 1].t {
            return ProfileRow {
                t,
                ..rows[rows.len() - 1]
            };
        }
        let idx = rows.partition_point(|r| r.t <= t);
        let (a, b) = (&rows[idx - 1], &rows[idx]);
        let u = (t - a.t) / (b.t - a.t);
        ProfileRow {
            t,
            pedal: a.pedal,
            fx: a.fx + (b.fx - a.fx) * u,
            fy: a.fy + (b.fy - a.fy) * u,
            fz: a.fz + (b.fz - a.fz) * u,
        }
    }

    /// Text format: `t pedal fx fy fz` per line, pedal as 0/1.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# operator profile: t pedal fx fy fz\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                r.t,
                if r.pedal { 1 } else { 0 },
                r.fx,
                r.fy,
                r.fz
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut rows = Vec::new();
        for (line_no, line) in content_lines(text) {
            let v = parse_floats(line_no, line, 5)?;
            let pedal = if v[1] == 0.0 {
                false
            } else if v[1] == 1.0 {
                true
            } else {
                return Err(ParseError::new(line_no, "pedal must be 0 or 1"));
            };
            rows.push(ProfileRow {
                t: v[0],
                pedal,
                fx: v[2],
                fy: v[3],
                fz: v[4],
            });
        }
        Self::new(rows)
    }
}
