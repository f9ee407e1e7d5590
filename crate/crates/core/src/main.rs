fn main() {
    std::process::exit(cluster_decay::cli::run(std::env::args_os()));
}
