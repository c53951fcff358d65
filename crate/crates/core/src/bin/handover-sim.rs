use std::process::ExitCode;

use bp_handover::cli::{parse_args, run_experiment};

fn main() -> ExitCode {
    let cfg = match parse_args(std::env::args_os()) {
        Ok(cfg) => cfg,
        // help and version exit 0, usage errors exit 2
        Err(e) => e.exit(),
    };
    match run_experiment(&cfg) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            // error messages already embed their causes
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
