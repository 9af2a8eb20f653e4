//! The `glpp` command line: configuration, feature files, run directories.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

use std::ffi::OsString;

pub use commands::{execute, Cli, Command};
pub use config::RunConfig;
pub use report::Report;

use crate::error::Error;

pub const VERSION: &str = concat!("grouploss ", env!("CARGO_PKG_VERSION"));

/// Short machine-friendly name of an error variant.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::ZeroVarianceRow(_) => "ZeroVarianceRow",
        Error::NonPositiveTemperature(_) => "NonPositiveTemperature",
        Error::LabelOutOfRange { .. } => "LabelOutOfRange",
        Error::DegenerateSupport { .. } => "DegenerateSupport",
        Error::AllAnchors => "AllAnchors",
        Error::ShapeMismatch(_) => "ShapeMismatch",
        Error::InsufficientSamples { .. } => "InsufficientSamples",
        Error::InvalidBatchSpec(_) => "InvalidBatchSpec",
        Error::ZeroVector => "ZeroVector",
        Error::NotInvolution => "NotInvolution",
        Error::EmptyList => "EmptyList",
        Error::KTooLarge { .. } => "KTooLarge",
        Error::LengthMismatch(..) => "LengthMismatch",
        Error::NoRelevantItems(_) => "NoRelevantItems",
        Error::InvalidParameter { .. } => "InvalidParameter",
        Error::Training { .. } => "Training",
        Error::UnknownKey(_) => "UnknownKey",
        Error::InvalidValue { .. } => "InvalidValue",
        Error::MissingRequired(_) => "MissingRequired",
        Error::BadMagic => "BadMagic",
        Error::UnsupportedVersion(_) => "UnsupportedVersion",
        Error::TruncatedPayload { .. } => "TruncatedPayload",
        Error::MalformedCsvRow { .. } => "MalformedCsvRow",
        Error::Io(_) => "Io",
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnknownKey(_) | Error::InvalidValue { .. } | Error::MissingRequired(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Failures print one `error[Kind]: message` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::Parser;

    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.replacen("error:", "error[Usage]:", 1));
            return 2;
        }
    };
    let mut out = std::io::stdout().lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_kind(&e));
            exit_code(&e)
        }
    }
}
