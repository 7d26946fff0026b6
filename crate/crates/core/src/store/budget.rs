//! Outgoing data rate of one measurement point.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    pub bits_per_value: f64,
    pub phases: f64,
    pub sample_rate: f64,
    pub harmonic_orders: f64,
    pub power_interval: f64,
    pub harmonics_interval: f64,
    pub rms_interval: f64,
    pub pst_interval: f64,
    pub demand_interval: f64,
    pub frequency_interval: f64,
    /// Average rates of the event rows; they depend on how often events
    /// happen and are taken as given.
    pub event_length_bps: f64,
    pub event_type_bps: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            bits_per_value: 64.0,
            phases: 3.0,
            sample_rate: 3200.0,
            harmonic_orders: 33.0,
            power_interval: 1.0,
            harmonics_interval: 3.0,
            rms_interval: 0.2,
            pst_interval: 600.0,
            demand_interval: 900.0,
            frequency_interval: 1.0,
            event_length_bps: 4.0,
            event_type_bps: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub parameter: &'static str,
    pub precision: &'static str,
    pub update_rate: &'static str,
    pub three_phase: bool,
    pub bps: f64,
    /// Raw waveform rows only count while an event is being captured.
    pub raw_event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficBudget {
    pub rows: Vec<BudgetRow>,
    pub total_with_events: f64,
    pub total_without_events: f64,
}

pub fn compute_traffic_budget(cfg: &BudgetConfig) -> TrafficBudget {
    let b = cfg.bits_per_value;
    let ph = cfg.phases;
    let row = |parameter, precision, update_rate, three_phase, bps, raw_event| BudgetRow {
        parameter,
        precision,
        update_rate,
        three_phase,
        bps,
        raw_event,
    };
    let power = b * ph / cfg.power_interval;
    let harmonics = b * cfg.harmonic_orders * ph / cfg.harmonics_interval;
    let raw = cfg.sample_rate * b * ph;
    let rows = vec![
        row("Active Power", "Double", "every second", true, power, false),
        row("Reactive Power", "Double", "every second", true, power, false),
        row("Apparent Power", "Double", "every second", true, power, false),
        row("Power Factor", "Double", "every second", true, power, false),
        row("33 Voltage Harmonics", "Double", "every 3 secs.", true, harmonics, false),
        row("33 Current Harmonics", "Double", "every 3 secs.", true, harmonics, false),
        // voltage and current
        row("RMS Current and Voltage", "Double", "every 0.2 secs.", true, b * 2.0 * ph / cfg.rms_interval, false),
        row("Event Length", "Integer", "variable", false, cfg.event_length_bps, false),
        row("Event Type", "String", "variable", false, cfg.event_type_bps, false),
        row("Event Raw Current Data", "Double", "variable", true, raw, true),
        row("Event Raw Voltage Data", "Double", "variable", true, raw, true),
        row("Short Term Flicker", "Double", "every 10 mins.", true, b * ph / cfg.pst_interval, false),
        row("Demand", "Double", "every 15 mins.", true, b * ph / cfg.demand_interval, false),
        row("Frequency", "Double", "every second", false, b / cfg.frequency_interval, false),
    ];
    let total_with_events = rows.iter().map(|r| r.bps).sum();
    let total_without_events = rows.iter().filter(|r| !r.raw_event).map(|r| r.bps).sum();
    TrafficBudget {
        rows,
        total_with_events,
        total_without_events,
    }
}

/// Three decimals, trailing zeros trimmed, thousands grouped with commas.
pub fn format_rate(bps: f64) -> String {
    let fixed = format!("{:.3}", bps.abs());
    let (int, frac) = fixed.split_once('.').unwrap_or((&fixed, ""));
    let mut grouped = String::new();
    for (k, c) in int.chars().enumerate() {
        if k > 0 && (int.len() - k) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    let frac = frac.trim_end_matches('0');
    let sign = if bps < 0.0 && fixed.bytes().any(|c| c.is_ascii_digit() && c != b'0') { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{grouped}")
    } else {
        format!("{sign}{grouped}.{frac}")
    }
}

impl TrafficBudget {
    /// Aligned text table. Raw waveform rows and the with-events total are
    /// included only when `with_events` is set.
    pub fn render(&self, with_events: bool) -> String {
        let mut lines: Vec<[String; 5]> = vec![[
            "Parameter".into(),
            "Precision".into(),
            "Update Rate".into(),
            "Three Phase".into(),
            "Bit Rate (bps)".into(),
        ]];
        for r in self.rows.iter().filter(|r| with_events || !r.raw_event) {
            lines.push([
                r.parameter.into(),
                r.precision.into(),
                r.update_rate.into(),
                if r.three_phase { "Yes" } else { "No" }.into(),
                format_rate(r.bps),
            ]);
        }
        if with_events {
            lines.push(total_line("Total (with Events)", self.total_with_events));
        }
        lines.push(total_line("Total (without Events)", self.total_without_events));

        let mut width = [0usize; 5];
        for l in &lines {
            for (w, cell) in width.iter_mut().zip(l) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for (k, l) in lines.iter().enumerate() {
            let mut line = String::new();
            for (c, cell) in l.iter().enumerate() {
                if c == 4 {
                    line.push_str(&format!("{cell:>w$}", w = width[c]));
                } else {
                    line.push_str(&format!("{cell:<w$}  ", w = width[c]));
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
            if k == 0 {
                let total: usize = width.iter().sum::<usize>() + 2 * 4;
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}

fn total_line(label: &str, bps: f64) -> [String; 5] {
    [label.into(), String::new(), String::new(), String::new(), format_rate(bps)]
}

impl fmt::Display for TrafficBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(true))
    }
}
