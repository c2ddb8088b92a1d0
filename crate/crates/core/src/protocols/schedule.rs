//! Timed pulse schedules and their line-oriented text format.
//!
//! One segment per line, a keyword followed by `key=value` pairs:
//!
//! ```text
//! gradient delta_k=-6.85e2 duration=1e-7
//! resonance target=spins profile=square detuning=0e0 duration=3.96e-8
//! frame_shift cavity=1.57e0 spins=0e0 cpb=0e0
//! ```
//!
//! Numbers are written with `{:e}`, which round-trips exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Spins,
    Cpb,
}

/// Detuning of the resonance target from the cavity during a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DetuningProfile {
    Square { detuning: f64 },
    /// Linear sweep from `start` to `end`.
    Ramp { start: f64, end: f64 },
}

impl DetuningProfile {
    pub fn on_resonance() -> Self {
        Self::Square { detuning: 0.0 }
    }

    pub fn at(&self, fraction: f64) -> f64 {
        match *self {
            Self::Square { detuning } => detuning,
            Self::Ramp { start, end } => start + (end - start) * fraction,
        }
    }

    pub fn mean(&self) -> f64 {
        self.at(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Segment {
    /// Field gradient adding `delta_k` to every stored wavenumber.
    Gradient { delta_k: f64, duration: f64 },
    /// Switches the target into (near) resonance with the cavity.
    Resonance {
        target: Target,
        duration: f64,
        profile: DetuningProfile,
    },
    /// Classical drive on the CPB: rotation by `angle` about the equatorial
    /// axis at `phase`.
    CpbDrive { phase: f64, angle: f64, duration: f64 },
    /// Instantaneous uniform classical rotation of the spins with the spatial
    /// profile of the cavity mode.
    SpinPulse { angle: f64, phase: f64 },
    /// Instantaneous refocusing pulse of rotation angle `π + 2 error`.
    Echo { error: f64, phase: f64 },
    Wait { duration: f64 },
    /// Virtual phase update: every amplitude is multiplied by
    /// `exp(i (cavity n_c + spins n_s + cpb n_b))`.
    FrameShift { cavity: f64, spins: f64, cpb: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Self::Gradient { duration, .. }
            | Self::Resonance { duration, .. }
            | Self::CpbDrive { duration, .. }
            | Self::Wait { duration } => duration,
            Self::SpinPulse { .. } | Self::Echo { .. } | Self::FrameShift { .. } => 0.0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gradient { .. } => "gradient",
            Self::Resonance { .. } => "resonance",
            Self::CpbDrive { .. } => "cpb_drive",
            Self::SpinPulse { .. } => "spin_pulse",
            Self::Echo { .. } => "echo",
            Self::Wait { .. } => "wait",
            Self::FrameShift { .. } => "frame_shift",
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.duration();
        if !(d.is_finite() && d >= 0.0) {
            return Err(invalid("duration", format!("{} segment has duration {d}", self.kind())));
        }
        if let Self::Echo { error, .. } = self {
            if !(error.abs() < 0.5) {
                return Err(invalid("error", "echo error must satisfy |ε| < 0.5"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Gradient { delta_k, duration } => {
                write!(f, "gradient delta_k={delta_k:e} duration={duration:e}")
            }
            Self::Resonance {
                target,
                duration,
                profile,
            } => {
                let t = match target {
                    Target::Spins => "spins",
                    Target::Cpb => "cpb",
                };
                match profile {
                    DetuningProfile::Square { detuning } => write!(
                        f,
                        "resonance target={t} profile=square detuning={detuning:e} duration={duration:e}"
                    ),
                    DetuningProfile::Ramp { start, end } => write!(
                        f,
                        "resonance target={t} profile=ramp start={start:e} end={end:e} duration={duration:e}"
                    ),
                }
            }
            Self::CpbDrive {
                phase,
                angle,
                duration,
            } => write!(
                f,
                "cpb_drive phase={phase:e} angle={angle:e} duration={duration:e}"
            ),
            Self::SpinPulse { angle, phase } => {
                write!(f, "spin_pulse angle={angle:e} phase={phase:e}")
            }
            Self::Echo { error, phase } => write!(f, "echo error={error:e} phase={phase:e}"),
            Self::Wait { duration } => write!(f, "wait duration={duration:e}"),
            Self::FrameShift { cavity, spins, cpb } => write!(
                f,
                "frame_shift cavity={cavity:e} spins={spins:e} cpb={cpb:e}"
            ),
        }
    }
}

struct Fields<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, tokens: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
                line,
                reason: format!("expected key=value, found `{tok}`"),
            })?;
            if map.insert(k, v).is_some() {
                return Err(Error::Parse {
                    line,
                    reason: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self { line, map })
    }

    fn text(&mut self, key: &str) -> Result<&'a str> {
        self.map.remove(key).ok_or_else(|| Error::Parse {
            line: self.line,
            reason: format!("missing `{key}`"),
        })
    }

    fn num(&mut self, key: &str) -> Result<f64> {
        let line = self.line;
        let v = self.text(key)?;
        v.parse().map_err(|_| Error::Parse {
            line,
            reason: format!("`{key}` is not a number: `{v}`"),
        })
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Parse {
                line: self.line,
                reason: format!("unexpected key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

fn parse_segment(line: usize, text: &str) -> Result<Segment> {
    let mut tokens = text.split_whitespace();
    let kind = tokens.next().unwrap_or_default();
    let mut f = Fields::parse(line, tokens)?;
    let seg = match kind {
        "gradient" => Segment::Gradient {
            delta_k: f.num("delta_k")?,
            duration: f.num("duration")?,
        },
        "resonance" => {
            let target = match f.text("target")? {
                "spins" => Target::Spins,
                "cpb" => Target::Cpb,
                other => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown target `{other}`"),
                    })
                }
            };
            let profile = match f.text("profile")? {
                "square" => DetuningProfile::Square {
                    detuning: f.num("detuning")?,
                },
                "ramp" => DetuningProfile::Ramp {
                    start: f.num("start")?,
                    end: f.num("end")?,
                },
                other => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown profile `{other}`"),
                    })
                }
            };
            Segment::Resonance {
                target,
                duration: f.num("duration")?,
                profile,
            }
        }
        "cpb_drive" => Segment::CpbDrive {
            phase: f.num("phase")?,
            angle: f.num("angle")?,
            duration: f.num("duration")?,
        },
        "spin_pulse" => Segment::SpinPulse {
            angle: f.num("angle")?,
            phase: f.num("phase")?,
        },
        "echo" => Segment::Echo {
            error: f.num("error")?,
            phase: f.num("phase")?,
        },
        "wait" => Segment::Wait {
            duration: f.num("duration")?,
        },
        "frame_shift" => Segment::FrameShift {
            cavity: f.num("cavity")?,
            spins: f.num("spins")?,
            cpb: f.num("cpb")?,
        },
        other => {
            return Err(Error::Parse {
                line,
                reason: format!("unknown segment `{other}`"),
            })
        }
    };
    f.finish()?;
    seg.validate().map_err(|e| Error::Parse {
        line,
        reason: e.to_string(),
    })?;
    Ok(seg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    segments: Vec<Segment>,
}

impl PulseSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut s = Self::new();
        for seg in segments {
            s.push(seg)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, seg: Segment) -> Result<()> {
        seg.validate()?;
        self.segments.push(seg);
        Ok(())
    }

    pub fn extend(&mut self, other: &PulseSchedule) {
        self.segments.extend_from_slice(&other.segments);
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Sum of all gradient wavenumber shifts.
    pub fn net_delta_k(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Gradient { delta_k, .. } => *delta_k,
                _ => 0.0,
            })
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

impl FromStr for PulseSchedule {
    type Err = Error;

    /// Blank lines and lines starting with `#` are skipped.
    fn from_str(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            segments.push(parse_segment(i + 1, line)?);
        }
        Ok(Self { segments })
    }
}

impl fmt::Display for PulseSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
