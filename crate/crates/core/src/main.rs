use clap::Parser;

fn main() {
    std::process::exit(cotdr::cli::execute(cotdr::cli::Cli::parse()));
}
