use std::io::Write;

fn main() {
    let output = codelog::cli::dispatch(std::env::args_os());
    print!("{}", output.stdout);
    eprint!("{}", output.stderr);
    let _ = std::io::stdout().flush();
    std::process::exit(output.code);
}
