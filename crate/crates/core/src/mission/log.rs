//! Per-tick trajectory logs and the metrics computed from them.

use std::fmt;
use std::io::Write;

use crate::actuation::Wrench;
use crate::dynamics::RigidState;
use crate::math3d::{Quat, Vec3};

pub const LOG_COLUMNS: [&str; 34] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "Fx", "Fy", "Fz", "Tx",
    "Ty", "Tz", "Fcx", "Fcy", "Fcz", "Tcx", "Tcy", "Tcz", "epx", "epy", "epz", "erx", "ery", "erz", "mode",
    "maneuver",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    RlPolicy,
    Baseline,
    HoldFallback,
}

impl ControlMode {
    pub fn name(self) -> &'static str {
        match self {
            ControlMode::RlPolicy => "rl_policy",
            ControlMode::Baseline => "baseline",
            ControlMode::HoldFallback => "hold_fallback",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// State after one control tick together with the wrench that produced it.
/// The state is the one the flight software perceives; errors are relative
/// to the maneuver goal in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: RigidState,
    pub applied: Wrench,
    pub commanded: Wrench,
    pub pos_err: Vec3,
    pub ori_err: Vec3,
    pub mode: ControlMode,
    /// 1-based position in the sequence.
    pub maneuver: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: &TrajectoryLog) {
        self.rows.extend_from_slice(&other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS)?;
        for r in &self.rows {
            let s = &r.state;
            let mut rec: Vec<String> = Vec::with_capacity(LOG_COLUMNS.len());
            rec.push(r.t.to_string());
            let q = s.attitude;
            for v in [s.position.x, s.position.y, s.position.z, q.w, q.x, q.y, q.z] {
                rec.push(v.to_string());
            }
            for v in [s.lin_vel, s.ang_vel, r.applied.force, r.applied.torque, r.commanded.force, r.commanded.torque, r.pos_err, r.ori_err] {
                rec.extend(v.to_array().iter().map(f64::to_string));
            }
            rec.push(r.mode.name().to_string());
            rec.push(r.maneuver.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Log of a recorded evaluation episode; errors are recomputed in the world
/// frame whatever frame the policy observed in.
pub fn episode_log(rec: &crate::eval::EpisodeRecord, mode: ControlMode) -> TrajectoryLog {
    let rows = rec
        .trace
        .iter()
        .map(|tr| {
            let err = crate::env::observe(&tr.state, &rec.goal);
            LogRow {
                t: tr.t,
                state: tr.state,
                applied: tr.applied,
                commanded: tr.commanded,
                pos_err: err.pos_err,
                ori_err: err.ori_err,
                mode,
                maneuver: 1,
            }
        })
        .collect();
    TrajectoryLog { rows }
}

/// Settling tolerances used by [`compare_metrics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleTolerance {
    pub pos: f64,
    pub ori: f64,
}

impl Default for SettleTolerance {
    fn default() -> Self {
        Self { pos: 0.05, ori: 5f64.to_radians() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// |final pos_err| per world axis, m.
    pub final_pos_err: Vec3,
    /// |final ori_err| per world axis, rad.
    pub final_ori_err: Vec3,
    /// From maneuver start to entering tolerance for good; NaN if never.
    pub settle_time: f64,
    /// Largest distance from the straight entry→goal line, m.
    pub cross_axis_excursion: f64,
    pub path_length: f64,
    /// ∫|F| dt, N·s.
    pub force_effort: f64,
    /// ∫|τ| dt, N·m·s.
    pub torque_effort: f64,
}

impl Metrics {
    fn fields(&self) -> [f64; 11] {
        [
            self.final_pos_err.x,
            self.final_pos_err.y,
            self.final_pos_err.z,
            self.final_ori_err.x,
            self.final_ori_err.y,
            self.final_ori_err.z,
            self.settle_time,
            self.cross_axis_excursion,
            self.path_length,
            self.force_effort,
            self.torque_effort,
        ]
    }

    pub const NAMES: [&'static str; 11] = [
        "final_epx", "final_epy", "final_epz", "final_erx", "final_ery", "final_erz", "settle_time",
        "cross_axis_excursion", "path_length", "force_effort", "torque_effort",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rl: Metrics,
    pub baseline: Metrics,
}

impl MetricReport {
    /// `rl − baseline`, field by field, in [`Metrics::NAMES`] order.
    pub fn differences(&self) -> [f64; 11] {
        let (a, b) = (self.rl.fields(), self.baseline.fields());
        std::array::from_fn(|k| a[k] - b[k])
    }

    /// True when the baseline finishes closer to the goal position.
    pub fn baseline_more_accurate(&self) -> bool {
        self.baseline.final_pos_err.norm() < self.rl.final_pos_err.norm()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "baseline", "rl", "rl_minus_baseline"])?;
        let (b, r, d) = (self.baseline.fields(), self.rl.fields(), self.differences());
        for k in 0..Metrics::NAMES.len() {
            w.write_record([Metrics::NAMES[k].to_string(), b[k].to_string(), r[k].to_string(), d[k].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("log is empty")]
    Empty,
    #[error("logs describe different maneuvers: {0}")]
    Mismatch(String),
}

/// Goal pose implied by a row: position + pos_err, exp(ori_err) ⊗ attitude.
pub fn implied_goal(row: &LogRow) -> (Vec3, Quat) {
    let att = Quat::from_rotation_vector(row.ori_err).hamilton(row.state.attitude).normalized();
    (row.state.position + row.pos_err, att)
}

/// Metrics of a single-maneuver log. The maneuver's start is one tick
/// before the first row; the entry position is taken from the first row.
pub fn metrics(log: &TrajectoryLog, tol: &SettleTolerance) -> Result<Metrics, MetricError> {
    let rows = &log.rows;
    let first = rows.first().ok_or(MetricError::Empty)?;
    let last = rows.last().unwrap();
    let tick = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
    let start = first.t - tick;

    let (goal, _) = implied_goal(first);
    let entry = first.state.position;
    let dir = goal - entry;
    let dir_len = dir.norm();
    let cross = |p: Vec3| {
        let d = p - entry;
        if dir_len > 0.0 {
            let u = dir / dir_len;
            (d - u * d.dot(u)).norm()
        } else {
            d.norm()
        }
    };

    let mut settle = f64::NAN;
    for r in rows.iter().rev() {
        if r.pos_err.norm() <= tol.pos && r.ori_err.norm() <= tol.ori {
            settle = r.t - start;
        } else {
            break;
        }
    }

    let mut m = Metrics {
        final_pos_err: last.pos_err.map(f64::abs),
        final_ori_err: last.ori_err.map(f64::abs),
        settle_time: settle,
        cross_axis_excursion: 0.0,
        path_length: 0.0,
        force_effort: 0.0,
        torque_effort: 0.0,
    };
    let mut prev_t = start;
    for (k, r) in rows.iter().enumerate() {
        let dt = r.t - prev_t;
        prev_t = r.t;
        m.force_effort += r.applied.force.norm() * dt;
        m.torque_effort += r.applied.torque.norm() * dt;
        m.cross_axis_excursion = m.cross_axis_excursion.max(cross(r.state.position));
        if k > 0 {
            m.path_length += (r.state.position - rows[k - 1].state.position).norm();
        }
    }
    Ok(m)
}

/// Metrics of two runs of the same maneuver from the same start.
pub fn compare_metrics(log_rl: &TrajectoryLog, log_baseline: &TrajectoryLog, tol: &SettleTolerance) -> Result<MetricReport, MetricError> {
    let a = log_rl.rows.first().ok_or(MetricError::Empty)?;
    let b = log_baseline.rows.first().ok_or(MetricError::Empty)?;
    if a.maneuver != b.maneuver {
        return Err(MetricError::Mismatch(format!("maneuver index {} vs {}", a.maneuver, b.maneuver)));
    }
    let (ga, qa) = implied_goal(a);
    let (gb, qb) = implied_goal(b);
    if (ga - gb).norm() > 1e-6 || crate::math3d::quat_error(qa, qb).norm() > 1e-6 {
        return Err(MetricError::Mismatch(format!(
            "goal ({:.4}, {:.4}, {:.4}) vs ({:.4}, {:.4}, {:.4})",
            ga.x, ga.y, ga.z, gb.x, gb.y, gb.z
        )));
    }
    Ok(MetricReport { rl: metrics(log_rl, tol)?, baseline: metrics(log_baseline, tol)? })
}

/// Error-vs-time table for plotting two runs side by side; the shorter run
/// holds its last value.
pub fn write_error_table<W: Write>(baseline: &TrajectoryLog, rl: &TrajectoryLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t", "base_epx", "base_epy", "base_epz", "base_erx", "base_ery", "base_erz", "rl_epx", "rl_epy", "rl_epz",
        "rl_erx", "rl_ery", "rl_erz",
    ])?;
    let n = baseline.len().max(rl.len());
    for k in 0..n {
        let b = &baseline.rows[k.min(baseline.len().saturating_sub(1))];
        let r = &rl.rows[k.min(rl.len().saturating_sub(1))];
        let t = if k < baseline.len() { b.t } else { r.t };
        let mut rec = vec![t.to_string()];
        for v in [b.pos_err, b.ori_err, r.pos_err, r.ori_err] {
            rec.extend(v.to_array().iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
