//! Builds the daily, trip-time, missing-trip and boxplot reports from the hub log.

use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::Parser;

use edgetransit::hub::{export, load_schedule, read_messages, Format, ReportSet, DEFAULT_TOLERANCE_MIN};

#[derive(Parser)]
#[command(about = "Render hub reports for a date range")]
struct Args {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
    /// CSV `route_name,date,departure_time`; without it no trip is reported missing.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_MIN)]
    tolerance_min: u32,
}

fn run(args: Args) -> Result<(), Box<dyn Error>> {
    if args.to < args.from {
        return Err(format!("--to {} is before --from {}", args.to, args.from).into());
    }
    let schedule = match &args.schedule {
        Some(path) => load_schedule(path)?,
        None => Vec::new(),
    };
    std::fs::create_dir_all(&args.out)?;
    let messages = read_messages(&args.data_dir, args.from, args.to)?;
    let set = ReportSet::build(&messages, args.from, args.to, &schedule, args.tolerance_min);
    for path in export(&set, args.format, &args.out)? {
        println!("{}", path.display());
    }
    for r in set.daily.iter().filter(|r| r.edge_agrees() == Some(false)) {
        eprintln!("warning: {} daypart averages differ from the edge's daily summary", r.date);
    }
    if !set.skipped_groups.is_empty() {
        eprintln!("no trips in: {}", set.skipped_groups.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("report: {e}");
            ExitCode::FAILURE
        }
    }
}
