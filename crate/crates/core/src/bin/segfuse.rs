use clap::Parser;

fn main() {
    let cli = segfuse::cli::Cli::parse();
    if let Err(err) = segfuse::cli::run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
