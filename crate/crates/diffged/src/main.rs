use std::process::exit;

fn main() {
    exit(diffged::run_cli(std::env::args()));
}
