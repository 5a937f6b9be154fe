//! Flight-sequence files.
//!
//! One maneuver per line; `#` starts a comment.
//!
//! ```text
//! undock                    [timeout_s] [flags]   # +0.5 m along entry X
//! translate <axis> <m>      [timeout_s] [flags]   # entry body frame
//! rotate    <axis> <deg>    [timeout_s] [flags]   # entry body frame
//! goto_pose <x> <y> <z> <yaw_deg> [timeout_s] [flags]   # dock frame
//! dock_approach             [timeout_s] [flags]
//! dock                      [timeout_s] [flags]
//! ```
//!
//! Axes are `x`, `y`, `z`. Flags: `resume` (allowed to run after a safety
//! fallback), `los` (telemetry blackout during the maneuver).

use std::fmt;

use crate::math3d::Vec3;

pub const DEFAULT_TIMEOUT_S: f64 = 60.0;
pub const UNDOCK_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManeuverKind {
    Translate,
    Rotate,
    GotoPose,
    DockApproach,
    Dock,
}

/// Where a maneuver's goal comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Offset and body rotation vector expressed in the entry body frame.
    Relative { offset: Vec3, rotation: Vec3 },
    /// Pose in the dock frame.
    Absolute { position: Vec3, rotation: Vec3 },
    DockApproach,
    Dock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maneuver {
    pub kind: ManeuverKind,
    pub target: Target,
    /// s
    pub timeout: f64,
    pub resume: bool,
    pub loss_of_signal: bool,
    /// Short human-readable label for outcome tables.
    pub label: String,
}

impl Maneuver {
    pub fn translate(axis: Vec3, meters: f64, timeout: f64) -> Self {
        Self {
            kind: ManeuverKind::Translate,
            target: Target::Relative { offset: axis * meters, rotation: Vec3::ZERO },
            timeout,
            resume: false,
            loss_of_signal: false,
            label: format!("translate {:+.2} m {}", meters, axis_name(axis)),
        }
    }

    pub fn rotate(axis: Vec3, degrees: f64, timeout: f64) -> Self {
        Self {
            kind: ManeuverKind::Rotate,
            target: Target::Relative { offset: Vec3::ZERO, rotation: axis * degrees.to_radians() },
            timeout,
            resume: false,
            loss_of_signal: false,
            label: format!("rotate {:+.1} deg {}", degrees, axis_name(axis)),
        }
    }

    pub fn undock(timeout: f64) -> Self {
        Self { label: format!("undock ({:+.1} m X)", UNDOCK_DISTANCE), ..Self::translate(Vec3::X, UNDOCK_DISTANCE, timeout) }
    }

    pub fn goto_pose(position: Vec3, yaw_deg: f64, timeout: f64) -> Self {
        Self {
            kind: ManeuverKind::GotoPose,
            target: Target::Absolute { position, rotation: Vec3::Z * yaw_deg.to_radians() },
            timeout,
            resume: false,
            loss_of_signal: false,
            label: format!("goto ({:.2}, {:.2}, {:.2}) m yaw {:.1} deg", position.x, position.y, position.z, yaw_deg),
        }
    }

    pub fn dock_approach(timeout: f64) -> Self {
        Self {
            kind: ManeuverKind::DockApproach,
            target: Target::DockApproach,
            timeout,
            resume: false,
            loss_of_signal: false,
            label: "pre-dock motion to dock offset".into(),
        }
    }

    pub fn dock(timeout: f64) -> Self {
        Self {
            kind: ManeuverKind::Dock,
            target: Target::Dock,
            timeout,
            resume: false,
            loss_of_signal: false,
            label: "dock".into(),
        }
    }

    /// Parses one non-empty sequence line (comments already stripped).
    pub fn parse(line: &str) -> Result<Self, String> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (&kind, rest) = tokens.split_first().ok_or("empty maneuver")?;
        let (arity, build): (usize, fn(&[f64], f64) -> Result<Maneuver, String>) = match kind {
            "undock" => (0, |_, t| Ok(Maneuver::undock(t))),
            "translate" => (2, |a, t| Ok(Maneuver::translate(axis_from_code(a[0]), a[1], t))),
            "rotate" => (2, |a, t| Ok(Maneuver::rotate(axis_from_code(a[0]), a[1], t))),
            "goto_pose" => (4, |a, t| Ok(Maneuver::goto_pose(Vec3::new(a[0], a[1], a[2]), a[3], t))),
            "dock_approach" => (0, |_, t| Ok(Maneuver::dock_approach(t))),
            "dock" => (0, |_, t| Ok(Maneuver::dock(t))),
            other => return Err(format!("unknown maneuver kind '{other}'")),
        };
        if rest.len() < arity {
            return Err(format!("'{kind}' needs {arity} argument(s), found {}", rest.len()));
        }
        let mut args = Vec::with_capacity(arity);
        for (k, tok) in rest[..arity].iter().enumerate() {
            let v = if matches!(kind, "translate" | "rotate") && k == 0 {
                axis_code(tok)?
            } else {
                parse_number(tok)?
            };
            args.push(v);
        }
        let mut timeout = DEFAULT_TIMEOUT_S;
        let mut flags = &rest[arity..];
        if let Some((first, more)) = flags.split_first() {
            if let Ok(t) = first.parse::<f64>() {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(format!("timeout must be positive, got {first}"));
                }
                timeout = t;
                flags = more;
            }
        }
        let mut m = build(&args, timeout)?;
        for flag in flags {
            match *flag {
                "resume" => m.resume = true,
                "los" => m.loss_of_signal = true,
                other => return Err(format!("unknown flag '{other}' (expected resume or los)")),
            }
        }
        Ok(m)
    }
}

fn parse_number(tok: &str) -> Result<f64, String> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a number, found '{tok}'")),
    }
}

fn axis_code(tok: &str) -> Result<f64, String> {
    match tok.to_ascii_lowercase().as_str() {
        "x" => Ok(0.0),
        "y" => Ok(1.0),
        "z" => Ok(2.0),
        _ => Err(format!("expected axis x, y or z, found '{tok}'")),
    }
}

fn axis_from_code(code: f64) -> Vec3 {
    [Vec3::X, Vec3::Y, Vec3::Z][code as usize]
}

fn axis_name(axis: Vec3) -> &'static str {
    if axis == Vec3::X {
        "X"
    } else if axis == Vec3::Y {
        "Y"
    } else if axis == Vec3::Z {
        "Z"
    } else {
        "?"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn parse_sequence(text: &str) -> Result<Vec<Maneuver>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(Maneuver::parse(line).map_err(|message| ParseError { line: i + 1, message })?);
    }
    if out.is_empty() {
        return Err(ParseError { line: 0, message: "sequence contains no maneuvers".into() });
    }
    Ok(out)
}

/// The eight-maneuver ISS session: undock, ∓20° yaw, +0.5 m X, two dock
/// attempts each preceded by the offset approach.
pub const STOCK_SEQUENCE: &str = "\
# ISS flight session
undock               60
rotate z -20         60
rotate z 20          60
translate x 0.5      60
dock_approach        90
dock                 60
dock_approach        90 resume
dock                 60 los
";

pub fn stock_sequence() -> Vec<Maneuver> {
    parse_sequence(STOCK_SEQUENCE).expect("stock sequence parses")
}
