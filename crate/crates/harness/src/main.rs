fn main() {
    std::process::exit(hspice_harness::cli::main_entry());
}
