use clap::Parser;

use repvec::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("REPVEC_LOG")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            std::process::exit(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: configuring worker pool: {}", e);
            std::process::exit(1);
        }
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err);
        std::process::exit(err.exit_code());
    }
}
