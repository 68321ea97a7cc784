use clap::Parser;
use relcluster_cli::error::{CliError, ErrorKind};
use relcluster_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::new(ErrorKind::Usage, e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.kind.exit_code());
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.kind.exit_code());
    }
}
