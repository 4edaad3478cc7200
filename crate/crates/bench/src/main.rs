fn main() {
    std::process::exit(tuplespace_bench::cli::main_with(std::env::args_os()));
}
