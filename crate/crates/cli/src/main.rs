use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use ergomap_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let status = match run(&cli, &mut out, &mut err) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status()
        }
    };
    let _ = out.flush();
    ExitCode::from(status.code())
}
