fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = rgbd_vsod::cli::run() {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
