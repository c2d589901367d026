use clap::Parser;

fn main() {
    let cli = stroboreset::Cli::parse();
    std::process::exit(stroboreset::run(cli).code());
}
