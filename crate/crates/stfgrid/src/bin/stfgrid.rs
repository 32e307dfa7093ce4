fn main() {
    std::process::exit(stfgrid::cli::run());
}
