use clap::Parser;

use dualstop::cli::{emit, exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli).and_then(|o| emit(&cli, &o).map(|_| o)) {
        Ok(o) if o.ok => 0,
        Ok(_) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
