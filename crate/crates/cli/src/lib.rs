//! Command-line driver and HTTP preview service.
//!
//! [`run`] is the whole CLI: it parses arguments, dispatches a subcommand
//! and returns the process exit code (0 success, 1 processing error, 2
//! usage error).

pub mod args;
pub mod colorwheel;
pub mod commands;
pub mod service;
pub mod session;

use std::ffi::OsString;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::UsageError;

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Lift(a) => commands::lift(a),
        Command::Flow(a) => commands::flow(a),
        Command::Warp(a) => commands::warp(a),
        Command::Pose(a) => commands::pose(a, cli.seed),
        Command::Traj(a) => commands::traj(a),
        Command::Pe(a) => commands::pe(a),
        Command::Eval(a) => commands::eval(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
