fn main() {
    // die quietly on a closed pipe (`nhdimer analytics | head`) instead of panicking
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(nhdimer::cli::run(std::env::args_os()));
}
