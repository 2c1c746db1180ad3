fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let code = ps_eval_cli::run_cli(std::env::args_os());
    std::process::exit(code);
}
