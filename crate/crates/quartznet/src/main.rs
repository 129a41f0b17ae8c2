use clap::Parser;

fn main() {
    let cli = quartznet::cli::Cli::parse();
    std::process::exit(quartznet::cli::run(cli));
}
