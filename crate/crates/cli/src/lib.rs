//! `arc-bench`: config parsing, experiment subcommands and CSV report bundles
//! on top of `arc_core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches};

pub use commands::{cmd_ablate, cmd_probe, cmd_run, cmd_validate_otd, Command};
pub use config::{RawConfig, RunConfig, KEYS, OUT_DIR_ENV};
pub use error::CliError;
pub use report::{fmt_num, Bundle, Table};

const SUBCOMMANDS: &[(Command, &str)] = &[
    (Command::Run, "train and evaluate with and without ARC"),
    (Command::Probe, "independent per-task probes against the shared head"),
    (Command::Ablate, "evaluate ARC variants on shared training runs"),
    (Command::ValidateOtd, "detection precision for each beta in otd.betas"),
];

pub fn cli() -> clap::Command {
    let key_args: Vec<Arg> = KEYS
        .iter()
        .map(|(key, default, help)| {
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(format!("{help} [default: {default}]"))
                .action(ArgAction::Set)
        })
        .collect();
    let config_arg = Arg::new("config")
        .long("config")
        .short('c')
        .value_name("FILE")
        .help("key=value config file; flags of the same names override it");
    clap::Command::new("arc-bench")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Class-incremental benchmark with test-time retention and correction")
        .after_help(format!("{OUT_DIR_ENV} overrides run.out_dir from the config file; --run.out_dir overrides both."))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(SUBCOMMANDS.iter().map(|(cmd, about)| {
            clap::Command::new(cmd.name())
                .about(*about)
                .args_override_self(true)
                .arg(config_arg.clone())
                .args(key_args.clone())
        }))
}

/// Defaults, then the config file, then the environment, then flags.
pub fn resolve(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut raw = RawConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        raw.merge_file(Path::new(path))?;
    }
    raw.merge_env()?;
    for (key, _, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            raw.set(key, v)?;
        }
    }
    raw.resolve()
}

/// Parses `args`, runs the subcommand and writes its bundle. Returns the
/// bundle directory.
pub fn run_cli<I, T>(args: I) -> Result<PathBuf, anyhow::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = cli().try_get_matches_from(args)?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = SUBCOMMANDS
        .iter()
        .map(|(c, _)| *c)
        .find(|c| c.name() == name)
        .expect("registered subcommand");
    let cfg = resolve(sub)?;
    let bundle = cmd.execute(&cfg)?;
    Ok(bundle.write_atomic(&cmd.target(&cfg))?)
}
