use clap::Parser;
use gsplit::cli::{exit_code, run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // usage errors are configuration errors; exit status 2 means divergence
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("gsplit: {err}");
        std::process::exit(exit_code(&err));
    }
}
