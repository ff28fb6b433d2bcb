use std::sync::atomic::Ordering;

use behexec::cli::{cli_run, ABORT};

fn main() {
    if let Err(e) = ctrlc::set_handler(|| ABORT.store(true, Ordering::SeqCst)) {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    std::process::exit(cli_run(std::env::args_os()));
}
