use clap::Parser;

fn main() {
    let cli = gaplab::cli::Cli::parse();
    if let Err(e) = gaplab::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
