use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use wignerlab::Error;

mod args;
mod commands;
mod report;

use args::{expand_args_files, Cli};

const EXIT_USAGE: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Model(_) => 3,
        Error::Size(_) => 4,
        Error::Accuracy(_) => 5,
        Error::Parse(_) | Error::Io(_) => EXIT_USAGE,
    }
}

fn fail(kind: &str, msg: &str, code: u8) -> ExitCode {
    eprintln!("error[{kind}]: {msg}");
    ExitCode::from(code)
}

fn configure_threads(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("WIGNERLAB_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| format!("WIGNERLAB_THREADS=`{v}` is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("thread count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv = match expand_args_files(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return fail("io", &e.to_string(), EXIT_USAGE),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.kind().as_str().map(str::to_string).unwrap_or_default();
            let detail = e.to_string();
            let line = detail.lines().next().unwrap_or(&text).trim_start_matches("error: ");
            return fail("usage", line, EXIT_USAGE);
        }
    };
    if let Err(msg) = configure_threads(cli.threads) {
        return fail("usage", &msg, EXIT_USAGE);
    }
    let report = match commands::run(cli.command) {
        Ok(r) => r,
        Err(e) => return fail(e.kind(), &e.to_string(), exit_code(&e)),
    };
    let written = match &cli.output {
        Some(path) => std::fs::File::create(path).and_then(|mut f| report.write(cli.format, &mut f)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            report.write(cli.format, &mut lock).and_then(|_| lock.flush())
        }
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail("io", &e.to_string(), EXIT_USAGE),
    }
}
