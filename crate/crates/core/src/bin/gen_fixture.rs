//! Writes a synthetic AVL feed, its schedule and its ground truth.

use std::error::Error;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use edgetransit::fixtures::{corrupt, generate, FixtureSpec, AVL_FILE};

#[derive(Parser)]
#[command(about = "Generate a deterministic AVL fixture")]
struct Args {
    /// Key-value spec file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: Args) -> Result<(), Box<dyn Error>> {
    let spec = FixtureSpec::load(&args.spec)?;
    let fixture = generate(&spec);
    fixture.write(&args.out)?;
    println!(
        "{} trips, {} tuples, {} days in {}",
        fixture.trips.len(),
        fixture.tuple_count(),
        fixture.daily.len(),
        args.out.display()
    );
    if !spec.faults.is_clean() {
        let (text, manifest) = corrupt(&fixture.csv(), &spec.faults, spec.seed);
        fs::write(args.out.join(format!("corrupt_{AVL_FILE}")), text)?;
        fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        println!("corrupted copy: {manifest}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gen-fixture: {e}");
            ExitCode::FAILURE
        }
    }
}
