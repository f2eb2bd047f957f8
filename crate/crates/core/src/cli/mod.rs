//! Command-line front end.
//!
//! Every subcommand builds a [`Plant`](crate::Plant), drives one module and
//! serializes its report. Exit codes: 0 ok, 2 configuration error,
//! 3 solver non-convergence (the report is still written), 4 infeasible.

mod args;
mod commands;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::error::Error;

pub use args::{Cli, Command, Format, ModelPreset, SweepMode};
pub use commands::{sweep_rows, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Exit code for a module error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence | Error::Diverged { .. } => EXIT_NO_CONVERGENCE,
        Error::CapacityExceeded { .. } | Error::Unstable { .. } | Error::NoFeasibleStart => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs the subcommand and writes its
/// primary output to `out` unless `--output` names a file.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Formats like C's `%.12g`; infinities print as `inf`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    const DIGITS: i32 = 12;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= DIGITS {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
