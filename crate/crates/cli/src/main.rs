use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    if matches!(args.first().map(String::as_str), Some("help" | "--help" | "-h")) {
        println!("{}", omniflow_cli::USAGE);
        return ExitCode::SUCCESS;
    }
    let (report, status) = omniflow_cli::run(&args);
    if let Some(r) = report {
        println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
    }
    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
