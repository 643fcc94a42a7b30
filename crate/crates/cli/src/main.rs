use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOSTGUARD_LOG", "warn")).init();
    hostguard_cli::main_with_args(std::env::args_os())
}
