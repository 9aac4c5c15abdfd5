//! Edge node: replays a recorded feed or listens for live rows, and ships
//! trip and daily summaries to the hub.

use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use log::{error, info};

use edgetransit::avl_csv::RawRecord;
use edgetransit::edge::ingest::{ReplaySource, SocketIngest};
use edgetransit::edge::{run_pipeline, EdgeConfig, MessageSink, PipelineMetrics, Uplink};
use edgetransit::preprocess::AliasTable;
use edgetransit::wire::WireMessage;

#[derive(Parser)]
#[command(about = "Clean, annotate and summarize an AVL feed on the vehicle")]
struct Args {
    /// Key-value config file; every key can be overridden by EDGETRANSIT_<KEY>.
    #[arg(long)]
    config: PathBuf,
    /// AVL CSV file to replay.
    #[arg(long, conflicts_with = "listen", required_unless_present = "listen")]
    replay: Option<PathBuf>,
    /// Replay speed multiplier; 0 replays as fast as possible.
    #[arg(long, default_value_t = 1.0, requires = "replay")]
    speed: f64,
    /// Accept header-less CSV rows on this address.
    #[arg(long)]
    listen: Option<String>,
    /// Print messages to stdout instead of sending them to the hub.
    #[arg(long)]
    stdout: bool,
}

struct Stdout;

impl MessageSink for Stdout {
    fn deliver(&mut self, msg: WireMessage) {
        println!("{}", msg.to_line());
    }
}

fn report(metrics: &PipelineMetrics, malformed: u64) {
    info!(
        "tuples in {} clean {} dropped {} (missing critical {}, invalid {}) duplicates {} late {} malformed rows {}",
        metrics.tuples_in,
        metrics.tuples_clean,
        metrics.dropped_missing_critical + metrics.dropped_invalid,
        metrics.dropped_missing_critical,
        metrics.dropped_invalid,
        metrics.duplicates,
        metrics.late,
        malformed
    );
    info!(
        "trips summarized {} dropped {}; daily summaries {}; messages {}",
        metrics.trips_summarized, metrics.trips_dropped, metrics.daily_summaries, metrics.messages
    );
}

fn run(args: Args) -> Result<bool, Box<dyn Error>> {
    let config = EdgeConfig::load(&args.config)?;
    let aliases = match &config.alias_table {
        Some(path) => AliasTable::load(path)?,
        None => AliasTable::new(),
    };

    let (source, stats, live): (Box<dyn Iterator<Item = RawRecord> + Send>, _, bool) = match (&args.replay, &args.listen) {
        (Some(path), _) => {
            let replay = ReplaySource::open(path, args.speed)?;
            let stats = replay.stats();
            (Box::new(replay), stats, false)
        }
        (None, Some(addr)) => {
            let ingest = SocketIngest::bind(addr.as_str())?;
            info!("listening for rows on {}", ingest.local_addr());
            let stats = ingest.stats();
            (Box::new(ingest), stats, true)
        }
        (None, None) => unreachable!("clap requires one source"),
    };

    if args.stdout {
        let metrics = run_pipeline(&config, aliases, source, &mut Stdout, live);
        report(&metrics, stats.malformed());
        return Ok(true);
    }

    let uplink = Uplink::start(
        config.hub_endpoint.clone(),
        config.uplink_buffer_capacity,
        config.backoff_base(),
        config.backoff_cap(),
    );
    let metrics = run_pipeline(&config, aliases, source, &mut &uplink, live);
    report(&metrics, stats.malformed());
    let sent = uplink.shutdown(Duration::from_secs(config.shutdown_drain_timeout_s));
    info!(
        "uplink sent {} rejected {} retransmissions {} evicted {} pending {}",
        sent.sent, sent.rejected, sent.retransmissions, sent.evicted, sent.pending
    );
    if sent.pending > 0 {
        error!("{} messages were not delivered", sent.pending);
    }
    Ok(sent.pending == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
