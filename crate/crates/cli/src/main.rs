use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = eitoed::Args::parse();
    if let Err(e) = eitoed::run(&args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
