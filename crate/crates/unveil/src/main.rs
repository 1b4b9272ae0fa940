use std::io::Write;

use clap::Parser;
use unveil::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                // a closed pipe (`unveil ... | head`) is not an error
                let _ = writeln!(std::io::stdout().lock(), "{summary}");
            }
        }
        Err(e) => {
            let code = e.exit_code();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{code}]: {msg}");
            std::process::exit(code);
        }
    }
}
