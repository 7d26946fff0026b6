//! Disturbance script: a line-oriented text format, one disturbance per line.
//!
//! ```text
//! # kind  start  end  phases  magnitude  [order|mod_freq]
//! sag      0.2   0.7  A       0.80
//! harmonic 0     3    ABC     0.10       3
//! flicker_modulation 0 600 ABC 0.02      8.8
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{SignalError, MAX_HARMONIC_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        };
        write!(f, "{c}")
    }
}

/// Non-empty subset of the three phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ALL: PhaseSet = PhaseSet(0b111);

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & phase.bit() != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn from_phases(phases: &[Phase]) -> Option<PhaseSet> {
        let mask = phases.iter().fold(0, |m, p| m | p.bit());
        (mask != 0).then_some(PhaseSet(mask))
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    /// Accepts `A`, `abc`, `A,C` and similar spellings.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut mask = 0u8;
        for c in s.chars().filter(|c| *c != ',') {
            let p = match c.to_ascii_uppercase() {
                'A' => Phase::A,
                'B' => Phase::B,
                'C' => Phase::C,
                _ => return Err(format!("unknown phase '{c}' in '{s}'")),
            };
            mask |= p.bit();
        }
        if mask == 0 {
            return Err("empty phase set".into());
        }
        Ok(PhaseSet(mask))
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Sag,
    Swell,
    Interruption,
    Unbalance,
    Harmonic,
    FlickerModulation,
    FrequencyDrift,
}

impl DisturbanceKind {
    pub const ALL: [DisturbanceKind; 7] = [
        DisturbanceKind::Sag,
        DisturbanceKind::Swell,
        DisturbanceKind::Interruption,
        DisturbanceKind::Unbalance,
        DisturbanceKind::Harmonic,
        DisturbanceKind::FlickerModulation,
        DisturbanceKind::FrequencyDrift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisturbanceKind::Sag => "sag",
            DisturbanceKind::Swell => "swell",
            DisturbanceKind::Interruption => "interruption",
            DisturbanceKind::Unbalance => "unbalance",
            DisturbanceKind::Harmonic => "harmonic",
            DisturbanceKind::FlickerModulation => "flicker_modulation",
            DisturbanceKind::FrequencyDrift => "frequency_drift",
        }
    }

    /// Frequency drift shifts the whole system; it conflicts across phases.
    fn is_system_wide(self) -> bool {
        self == DisturbanceKind::FrequencyDrift
    }
}

impl fmt::Display for DisturbanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DisturbanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DisturbanceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown disturbance kind '{s}'"))
    }
}

/// One scripted disturbance.
///
/// `magnitude` is kind-specific: a per-unit amplitude scale for
/// sag/swell/interruption/unbalance, a fraction of the fundamental amplitude
/// for harmonics, a modulation depth for flicker, and the peak frequency
/// excursion in Hz for frequency drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub start: f64,
    pub end: f64,
    pub phases: PhaseSet,
    pub magnitude: f64,
    pub harmonic_order: Option<u32>,
    pub modulation_frequency: Option<f64>,
    /// 1-based source line, when parsed from text.
    #[serde(skip)]
    pub line: Option<usize>,
}

impl DisturbanceSpec {
    pub fn new(kind: DisturbanceKind, start: f64, end: f64, phases: PhaseSet, magnitude: f64) -> Self {
        Self {
            kind,
            start,
            end,
            phases,
            magnitude,
            harmonic_order: None,
            modulation_frequency: None,
            line: None,
        }
    }

    pub fn with_order(mut self, order: u32) -> Self {
        self.harmonic_order = Some(order);
        self
    }

    pub fn with_modulation_frequency(mut self, hz: f64) -> Self {
        self.modulation_frequency = Some(hz);
        self
    }

    fn overlaps(&self, other: &DisturbanceSpec) -> bool {
        self.start < other.end && other.start < self.end
    }

    fn check(&self, line: usize) -> Result<(), SignalError> {
        let range = |message: String| Err(SignalError::Range { line, message });
        if !(self.start.is_finite() && self.end.is_finite()) || self.start < 0.0 {
            return range(format!("invalid interval {}..{}", self.start, self.end));
        }
        if self.start >= self.end {
            return range(format!("start {} must precede end {}", self.start, self.end));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return range(format!("magnitude must be >= 0, got {}", self.magnitude));
        }
        match self.kind {
            DisturbanceKind::Harmonic => match self.harmonic_order {
                Some(h) if (2..=MAX_HARMONIC_ORDER).contains(&h) => {}
                Some(h) => return range(format!("harmonic order {h} outside 2..{MAX_HARMONIC_ORDER}")),
                None => return range("harmonic entry needs an order".into()),
            },
            DisturbanceKind::FlickerModulation => match self.modulation_frequency {
                Some(f) if f > 0.0 && f.is_finite() => {}
                Some(f) => return range(format!("modulation frequency must be > 0, got {f}")),
                None => return range("flicker_modulation entry needs a modulation frequency".into()),
            },
            _ => {
                if self.harmonic_order.is_some() || self.modulation_frequency.is_some() {
                    return range(format!("{} takes no trailing argument", self.kind));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for DisturbanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {}", self.kind, self.start, self.end, self.phases, self.magnitude)?;
        if let Some(h) = self.harmonic_order {
            write!(f, " {h}")?;
        }
        if let Some(m) = self.modulation_frequency {
            write!(f, " {m}")?;
        }
        Ok(())
    }
}

/// Ordered list of disturbances applied to a stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceScript {
    pub entries: Vec<DisturbanceSpec>,
}

impl DisturbanceScript {
    pub fn new(entries: Vec<DisturbanceSpec>) -> Self {
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn line_of(&self, idx: usize) -> usize {
        self.entries[idx].line.unwrap_or(idx + 1)
    }

    /// Range checks per entry and same-kind/same-phase overlap checks.
    pub fn validate(&self) -> Result<(), SignalError> {
        for (i, e) in self.entries.iter().enumerate() {
            e.check(self.line_of(i))?;
        }
        for (i, a) in self.entries.iter().enumerate() {
            for (j, b) in self.entries.iter().enumerate().skip(i + 1) {
                if a.kind != b.kind || !a.overlaps(b) {
                    continue;
                }
                let shared = if a.kind.is_system_wide() {
                    Some(a.phases.iter().next().unwrap_or(Phase::A))
                } else {
                    a.phases.iter().find(|p| b.phases.contains(*p))
                };
                if let Some(phase) = shared {
                    return Err(SignalError::Overlap {
                        first: self.line_of(i),
                        second: self.line_of(j),
                        kind: a.kind,
                        phase,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate_duration(&self, duration: f64) -> Result<(), SignalError> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.end > duration {
                return Err(SignalError::PastDuration {
                    line: self.line_of(i),
                    end: e.end,
                    duration,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for DisturbanceScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

impl FromStr for DisturbanceScript {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, SignalError> {
        parse_script(s)
    }
}

/// Parses and validates a script. Diagnostics carry 1-based line numbers.
pub fn parse_script(text: &str) -> Result<DisturbanceScript, SignalError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        entries.push(parse_line(content, line)?);
    }
    let script = DisturbanceScript { entries };
    script.validate()?;
    Ok(script)
}

fn parse_line(content: &str, line: usize) -> Result<DisturbanceSpec, SignalError> {
    let syntax = |message: String| SignalError::Syntax { line, message };
    let fields: Vec<&str> = content.split_whitespace().collect();
    if !(5..=6).contains(&fields.len()) {
        return Err(syntax(format!(
            "expected `kind start end phases magnitude [order|mod_freq]`, got {} fields",
            fields.len()
        )));
    }
    let kind: DisturbanceKind = fields[0].parse().map_err(syntax)?;
    let num = |name: &str, s: &str| {
        s.parse::<f64>()
            .map_err(|_| syntax(format!("{name} '{s}' is not a number")))
    };
    let start = num("start", fields[1])?;
    let end = num("end", fields[2])?;
    let phases: PhaseSet = fields[3].parse().map_err(syntax)?;
    let magnitude = num("magnitude", fields[4])?;
    let mut spec = DisturbanceSpec::new(kind, start, end, phases, magnitude);
    spec.line = Some(line);
    if let Some(extra) = fields.get(5) {
        match kind {
            DisturbanceKind::Harmonic => {
                let order = extra
                    .parse::<u32>()
                    .map_err(|_| syntax(format!("harmonic order '{extra}' is not an integer")))?;
                spec.harmonic_order = Some(order);
            }
            DisturbanceKind::FlickerModulation => {
                spec.modulation_frequency = Some(num("modulation frequency", extra)?);
            }
            _ => return Err(syntax(format!("{kind} takes no trailing argument"))),
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_comment_only() {
        assert!(parse_script("").unwrap().is_empty());
        assert!(parse_script("# nothing\n\n   # here\n").unwrap().is_empty());
    }

    #[test]
    fn one_sag_line() {
        let s = parse_script("sag 0.2 0.5 A 0.80  # dip on A\n").unwrap();
        assert_eq!(s.entries.len(), 1);
        let e = &s.entries[0];
        assert_eq!(e.kind, DisturbanceKind::Sag);
        assert_eq!((e.start, e.end, e.magnitude), (0.2, 0.5, 0.8));
        assert!(e.phases.contains(Phase::A) && !e.phases.contains(Phase::B));
    }

    #[test]
    fn overlapping_sags_name_both_lines() {
        let err = parse_script("sag 0.2 0.5 A 0.8\n# gap\nsag 0.4 0.9 AB 0.7\n").unwrap_err();
        match err {
            SignalError::Overlap { first, second, kind, phase } => {
                assert_eq!((first, second), (1, 3));
                assert_eq!(kind, DisturbanceKind::Sag);
                assert_eq!(phase, Phase::A);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_text("sag 0.2 0.5 A 0.8\nsag 0.4 0.9 A 0.7").contains("lines 1 and 2"));
    }

    fn err_text(s: &str) -> String {
        parse_script(s).unwrap_err().to_string()
    }

    #[test]
    fn adjacent_and_cross_phase_are_fine() {
        parse_script("sag 0.2 0.5 A 0.8\nsag 0.5 0.9 A 0.7\nsag 0.3 0.4 B 0.7\nswell 0.2 0.5 A 1.2").unwrap();
    }

    #[test]
    fn frequency_drift_overlap_is_system_wide() {
        assert!(parse_script("frequency_drift 0 2 A 0.5\nfrequency_drift 1 3 B 0.5").is_err());
    }

    #[test]
    fn harmonic_order_range() {
        assert!(parse_script("harmonic 0 1 A 0.1 3").is_ok());
        assert!(parse_script("harmonic 0 1 A 0.1 33").is_ok());
        assert!(matches!(parse_script("harmonic 0 1 A 0.1 1"), Err(SignalError::Range { line: 1, .. })));
        assert!(matches!(parse_script("harmonic 0 1 A 0.1 34"), Err(SignalError::Range { .. })));
        assert!(matches!(parse_script("harmonic 0 1 A 0.1"), Err(SignalError::Range { .. })));
    }

    #[test]
    fn syntax_errors_carry_line() {
        assert!(matches!(parse_script("\nsagg 0 1 A 0.8"), Err(SignalError::Syntax { line: 2, .. })));
        assert!(matches!(parse_script("sag zero 1 A 0.8"), Err(SignalError::Syntax { line: 1, .. })));
        assert!(matches!(parse_script("sag 0 1 D 0.8"), Err(SignalError::Syntax { .. })));
        assert!(matches!(parse_script("sag 0 1 A"), Err(SignalError::Syntax { .. })));
        assert!(matches!(parse_script("sag 0 1 A 0.8 3"), Err(SignalError::Syntax { .. })));
        assert!(matches!(parse_script("sag 1 0.5 A 0.8"), Err(SignalError::Range { .. })));
        assert!(matches!(parse_script("sag 0 1 A -0.1"), Err(SignalError::Range { .. })));
    }

    #[test]
    fn phase_set_spellings() {
        assert_eq!("A,C".parse::<PhaseSet>().unwrap().to_string(), "AC");
        assert_eq!("cba".parse::<PhaseSet>().unwrap(), PhaseSet::ALL);
        assert!("".parse::<PhaseSet>().is_err());
    }

    fn arb_spec() -> impl Strategy<Value = DisturbanceSpec> {
        let kind = prop::sample::select(DisturbanceKind::ALL.to_vec());
        (kind, 0u32..1000, 1u32..1000, 1u8..8, 0u32..2000, 2u32..=33, 1u32..400).prop_map(
            |(kind, start, len, mask, mag, order, modf)| {
                let mut s = DisturbanceSpec::new(
                    kind,
                    start as f64 / 10.0,
                    (start + len) as f64 / 10.0,
                    PhaseSet(mask),
                    mag as f64 / 1000.0,
                );
                match kind {
                    DisturbanceKind::Harmonic => s.harmonic_order = Some(order),
                    DisturbanceKind::FlickerModulation => s.modulation_frequency = Some(modf as f64 / 10.0),
                    _ => {}
                }
                s
            },
        )
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(entries in prop::collection::vec(arb_spec(), 0..12)) {
            let script = DisturbanceScript::new(entries);
            prop_assume!(script.validate().is_ok());
            let reparsed = parse_script(&script.to_string()).unwrap();
            prop_assert_eq!(reparsed.entries.len(), script.entries.len());
            for (a, b) in script.entries.iter().zip(&reparsed.entries) {
                let mut b = b.clone();
                b.line = None;
                prop_assert_eq!(a, &b);
            }
        }
    }
}
