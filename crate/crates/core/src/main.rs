use clap::Parser;

fn main() {
    let cli = odeng::cli::Cli::parse();
    std::process::exit(odeng::cli::run(cli));
}
