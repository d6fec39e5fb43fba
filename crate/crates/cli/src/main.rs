use clap::Parser;

fn main() {
    let cli = metapmp_cli::Cli::parse();
    if let Err(err) = metapmp_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(metapmp_cli::exit_code(&err));
    }
}
