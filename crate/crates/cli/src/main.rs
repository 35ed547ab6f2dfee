use clap::Parser;

fn main() {
    let cli = match fits_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { fits_cli::EXIT_USAGE } else { 0 });
        }
    };
    std::process::exit(fits_cli::run(cli));
}
