use std::process::ExitCode;

fn main() -> ExitCode {
    let code = mpgps_sim::cli::main(std::env::args_os());
    ExitCode::from(code as u8)
}
