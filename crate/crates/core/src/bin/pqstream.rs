use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pqstream::monitor::{analyze_to_directory, MonitorConfig, MonitorError, RunOptions};
use pqstream::query::{
    aggregate_events, event_detail, extract_raw_csv, render_chart, timeseries, ChartKind, ChartSpec, Measure,
    QuerySpec,
};
use pqstream::siggen::{generate_stream, parse_script, read_sample_dir, write_sample_dir, SignalConfig};
use pqstream::store::{
    compute_traffic_budget, BudgetConfig, LoadType, MeasurementPoint, ParameterType, PointKind, Store,
};
use pqstream::time::{Timestamp, DEFAULT_STREAM_START};

#[derive(Parser)]
#[command(name = "pqstream", version, about = "Power-quality stream engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a three-phase sample stream from a config and disturbance script.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Time of the first sample (RFC 3339).
        #[arg(long, default_value = DEFAULT_STREAM_START)]
        start: String,
    },
    /// Analyze a sample stream into transfer files.
    Analyze(AnalyzeArgs),
    /// Load transfer-file trees into the database.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Print the outgoing data-rate table of one measurement point.
    Budget {
        /// Include raw event waveform rows and the with-events total.
        #[arg(long)]
        with_events: bool,
    },
    /// Query the database.
    Query {
        #[command(subcommand)]
        what: QueryCommand,
    },
    /// Show one event (by database id); `--raw` extracts its waveform to CSV.
    Event {
        id: i64,
        #[arg(long, env = "PQSTREAM_DB", default_value = "pqstream.db")]
        db: PathBuf,
        #[arg(long)]
        raw: bool,
        /// CSV destination for `--raw` (default: event_<id>_raw.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Nominal phase voltage, volts RMS.
    #[arg(long)]
    nominal_v: f64,
    /// Reactive-power sign hint (degrees of current lag) used when the
    /// phasors cannot decide it.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lag_deg: f64,
    #[arg(long, default_value = "PQ-001")]
    point_id: String,
    #[arg(long)]
    point_name: Option<String>,
    #[arg(long, default_value = "busbar")]
    point_kind: String,
    #[arg(long, default_value = "Urban Only")]
    load_type: String,
    #[arg(long, default_value = "unknown")]
    city: String,
    #[arg(long, default_value = "unknown")]
    region: String,
    /// Voltage level in kV.
    #[arg(long, default_value_t = 34.5)]
    kv: f64,
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Grouped event counts from the per-point summaries.
    Events {
        #[arg(long, env = "PQSTREAM_DB", default_value = "pqstream.db")]
        db: PathBuf,
        /// Measurement point attribute(s) to group by.
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
        /// `attribute=value`, repeatable.
        #[arg(long)]
        filter: Vec<String>,
        /// `aggregate:column`, e.g. `sum:sag_count`; repeatable.
        #[arg(long)]
        measure: Vec<String>,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One parameter of one point over a time range.
    Series {
        #[arg(long, env = "PQSTREAM_DB", default_value = "pqstream.db")]
        db: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            config,
            script,
            out,
            start,
        } => gen(config.as_deref(), script.as_deref(), &out, &start),
        Command::Analyze(a) => analyze(a),
        Command::Ingest { root, db } => {
            let mut store = Store::open(&db).with_context(|| format!("opening {}", db.display()))?;
            let report = store.ingest_directory(&root)?;
            print!("{report}");
            Ok(())
        }
        Command::Budget { with_events } => {
            print!("{}", compute_traffic_budget(&BudgetConfig::default()).render(with_events));
            Ok(())
        }
        Command::Query { what } => query(what),
        Command::Event { id, db, raw, out } => {
            let store = Store::open_read_only(&db)?;
            let detail = event_detail(&store, id)?;
            print!("{}", detail.to_table().to_text());
            if let Some(why) = detail.raw_unavailable() {
                println!("{why}");
            } else if raw {
                let out = out.unwrap_or_else(|| PathBuf::from(format!("event_{id}_raw.csv")));
                let n = extract_raw_csv(&detail, &out)?;
                println!("wrote {n} samples x 6 channels to {}", out.display());
            }
            Ok(())
        }
    }
}

fn gen(config: Option<&Path>, script: Option<&Path>, out: &Path, start: &str) -> Result<()> {
    let cfg: SignalConfig = match config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SignalConfig::default(),
    };
    let script = match script {
        Some(p) => parse_script(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Default::default(),
    };
    let start = Timestamp::parse_iso8601(start).map_err(anyhow::Error::msg)?;
    let frames = generate_stream(&cfg, &script)?;
    let manifest = write_sample_dir(out, &cfg, &start.to_iso8601(), frames)?;
    println!(
        "wrote {} samples ({} s) in {} chunk(s) to {}",
        manifest.total_samples,
        manifest.total_samples as f64 / manifest.sample_rate as f64,
        manifest.chunks.len(),
        out.display()
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    if !(a.nominal_v > 0.0) {
        bail!("--nominal-v must be > 0");
    }
    let reader = read_sample_dir(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let m = reader.manifest().clone();
    let start = Timestamp::parse_iso8601(&m.start_time).map_err(anyhow::Error::msg)?;
    let mut config = MonitorConfig::nominal(m.nominal_frequency, a.nominal_v, m.nominal_current_rms);
    config.analyzer.lag_hint_deg = a.lag_deg;
    let point = MeasurementPoint {
        name: a.point_name.unwrap_or_else(|| a.point_id.clone()),
        id: a.point_id,
        point_kind: a.point_kind.parse::<PointKind>()?,
        load_type: a.load_type.parse::<LoadType>()?,
        city_name: a.city,
        region_name: a.region,
        voltage_level: a.kv,
    };
    let summary = analyze_to_directory(
        reader.map(|f| f.map_err(MonitorError::from)),
        config,
        &point,
        start,
        &a.out,
        RunOptions::default(),
    )?;
    println!("measurement point {} -> {}", point.id, summary.written.point_dir.display());
    for p in ParameterType::ALL {
        println!(
            "  {:<12} {:>8} rows in {} file(s)",
            p.as_str(),
            summary.written.rows(p),
            summary.written.files.get(&p).map_or(0, Vec::len)
        );
    }
    let d = &summary.diagnostics;
    println!(
        "  dropped partial windows: rms {}, power {}, harmonics {}, demand {}, pst {}; pst values without plt: {}",
        d.discarded_rms_windows,
        d.discarded_power_windows,
        d.discarded_harmonics_windows,
        d.discarded_demand_windows,
        d.discarded_pst_windows,
        d.missing_plt
    );
    for e in summary.events.iter().filter(|e| e.raw_error.is_some()) {
        println!("  event {}: raw capture not written: {}", e.event_id, e.raw_error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn parse_time(s: Option<&str>) -> Result<Option<Timestamp>> {
    s.map(|s| Timestamp::parse_iso8601(s).map_err(anyhow::Error::msg)).transpose()
}

fn emit(table: &pqstream::query::ResultTable, chart: Option<&str>, out: Option<&Path>) -> Result<()> {
    match (chart, out) {
        (Some(kind), Some(out)) => {
            render_chart(table, &ChartSpec::new(kind.parse::<ChartKind>()?), out)?;
            println!("wrote {} ({} rows)", out.display(), table.rows.len());
        }
        (Some(_), None) => bail!("--chart needs --out <file>"),
        (None, _) => print!("{}", table.to_text()),
    }
    Ok(())
}

fn query(what: QueryCommand) -> Result<()> {
    match what {
        QueryCommand::Events {
            db,
            group_by,
            filter,
            measure,
            chart,
            out,
        } => {
            let store = Store::open_read_only(&db)?;
            let mut spec = QuerySpec {
                group_by,
                ..Default::default()
            };
            for f in filter {
                let (k, v) = f.split_once('=').with_context(|| format!("filter '{f}' is not key=value"))?;
                spec.filters.push((k.trim().to_string(), v.trim().to_string()));
            }
            if !measure.is_empty() {
                spec.measures = measure.iter().map(|m| m.parse::<Measure>()).collect::<Result<_, _>>()?;
            }
            let table = aggregate_events(&store, &spec)?;
            emit(&table, chart.as_deref(), out.as_deref())
        }
        QueryCommand::Series {
            db,
            point,
            param,
            from,
            to,
            chart,
            out,
        } => {
            let store = Store::open_read_only(&db)?;
            let table = timeseries(
                &store,
                &point,
                param.parse::<ParameterType>()?,
                parse_time(from.as_deref())?,
                parse_time(to.as_deref())?,
            )?;
            emit(&table, chart.as_deref(), out.as_deref())
        }
    }
}
