//! Hub service: accepts edge connections and appends their messages to the log.

use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;
use log::{error, info};

use edgetransit::hub::HubServer;

#[derive(Parser)]
#[command(about = "Receive and persist edge summaries")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7051")]
    listen: String,
    #[arg(long)]
    data_dir: PathBuf,
    /// Seconds between statistics lines in the log.
    #[arg(long, default_value_t = 60)]
    stats_every: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let hub = match HubServer::start(args.listen.as_str(), &args.data_dir) {
        Ok(h) => h,
        Err(e) => {
            error!("cannot start hub on {}: {e}", args.listen);
            return ExitCode::FAILURE;
        }
    };
    println!("listening on {}", hub.local_addr());
    let mut last = hub.stats();
    loop {
        thread::sleep(Duration::from_secs(args.stats_every.max(1)));
        let now = hub.stats();
        if now != last {
            info!(
                "stored {} duplicates {} rejected {} malformed {} connections {}",
                now.stored, now.duplicates, now.rejected, now.malformed, now.connections
            );
            last = now;
        }
    }
}
