fn main() {
    std::process::exit(voxelrun::cli::run_from(std::env::args_os()));
}
