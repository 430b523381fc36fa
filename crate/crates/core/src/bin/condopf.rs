fn main() {
    // unlocked handles: suite workers log to stderr while the run is in progress
    let code = condensed_opf::bench::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
