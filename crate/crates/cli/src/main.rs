use std::collections::BTreeMap;
use std::io;

fn main() {
    let env: BTreeMap<String, String> = std::env::vars().collect();
    let code = wfmon_cli::run_cli(std::env::args_os(), &env, &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
