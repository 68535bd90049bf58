use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(infoval_cli::run(infoval_cli::Cli::parse()));
}
