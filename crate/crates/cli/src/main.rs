use clap::Parser;
use drci_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = drci_cli::run(cli) {
        eprintln!("drci: {e}");
        std::process::exit(e.exit_code());
    }
}
