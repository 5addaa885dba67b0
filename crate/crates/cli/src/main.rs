use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = lexsimp_cli::Cli::parse();
    if let Err(failure) = lexsimp_cli::run(cli) {
        eprintln!("error: {failure}");
        std::process::exit(failure.exit_code());
    }
}
