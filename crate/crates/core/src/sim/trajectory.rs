//! Trajectory CSV files: `t,Q_PM,Q_air,Q_TM,w_cryst,T_PM,T_TM,c_PM,d10,d50,d90`.
//!
//! Row `k` holds the measurement taken at `t` and the inputs applied from `t`
//! until the next row.

use std::io::{BufRead, Write};

use super::hydro::Inputs;
use super::plant::Measurement;
use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "t,Q_PM,Q_air,Q_TM,w_cryst,T_PM,T_TM,c_PM,d10,d50,d90";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub inputs: Inputs,
    pub y: [f64; 6],
}

impl TrajectoryRow {
    pub fn new(inputs: Inputs, m: &Measurement) -> Self {
        Self {
            t: m.time,
            inputs,
            y: m.values(),
        }
    }
}

/// One contiguous run sampled at a fixed period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for r in &self.rows {
            self.write_row(&mut w, r)?;
        }
        Ok(())
    }

    fn write_row<W: Write>(&self, w: &mut W, r: &TrajectoryRow) -> Result<()> {
        let u = &r.inputs;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t, u.q_pm, u.q_air, u.q_tm, u.w_cryst, r.y[0], r.y[1], r.y[2], r.y[3], r.y[4], r.y[5]
        )?;
        Ok(())
    }

    /// Reads one or more trajectories. A time that does not increase starts a
    /// new trajectory, so concatenated runs split at their boundaries.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        if header.trim() != TRAJECTORY_HEADER {
            return Err(Error::Parse(format!("unexpected header `{}`", header.trim())));
        }
        let mut out = Vec::new();
        let mut current = Trajectory::default();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 11 {
                return Err(Error::Parse(format!(
                    "line {}: expected 11 fields, got {}",
                    lineno + 2,
                    vals.len()
                )));
            }
            let row = TrajectoryRow {
                t: vals[0],
                inputs: Inputs {
                    q_pm: vals[1],
                    q_air: vals[2],
                    q_tm: vals[3],
                    w_cryst: vals[4],
                },
                y: [vals[5], vals[6], vals[7], vals[8], vals[9], vals[10]],
            };
            if let Some(prev) = current.rows.last() {
                if row.t <= prev.t {
                    out.push(std::mem::take(&mut current));
                }
            }
            current.rows.push(row);
        }
        if !current.rows.is_empty() {
            out.push(current);
        }
        Ok(out)
    }

    /// Writes several trajectories into one file.
    pub fn write_many<W: Write>(trajs: &[Trajectory], mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for t in trajs {
            for r in &t.rows {
                t.write_row(&mut w, r)?;
            }
        }
        Ok(())
    }
}
