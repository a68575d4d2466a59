mod args;
mod commands;
mod errors;
mod manifest;
mod outputs;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use errors::{CliError, CliResult};
use manifest::{write_manifest, ManifestBuilder};
use resolve::Resolver;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            eprint!("{err}");
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut resolver = Resolver::load(cli.config.as_deref())?;
    let threads = resolve_threads(&mut resolver, cli.threads)?;
    let json = cli.json;
    let seed_flag = cli.seed;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;

    let (name, manifest_path, summary) = pool.install(|| -> CliResult<_> {
        match cli.command {
            Command::Generate(args) => {
                let mut manifest = ManifestBuilder::new("generate");
                let summary = commands::generate(args, seed_flag, &mut resolver, &mut manifest)?;
                let out = out_dir_of(&summary)?;
                let path = out.join("manifest.json");
                write_manifest(&path, &manifest.finish(resolver.resolved.clone(), threads))?;
                Ok(("generate", path, summary))
            }
            Command::Discover(args) => {
                let mut manifest = ManifestBuilder::new("discover");
                resolver.resolved.insert("seed".into(), serde_json::json!(seed_flag));
                let summary = commands::discover(args, &mut resolver, &mut manifest)?;
                let path = sibling_manifest(&summary)?;
                write_manifest(&path, &manifest.finish(resolver.resolved.clone(), threads))?;
                Ok(("discover", path, summary))
            }
            Command::Detect(args) => {
                let mut manifest = ManifestBuilder::new("detect");
                resolver.resolved.insert("seed".into(), serde_json::json!(seed_flag));
                let summary = commands::detect_cmd(args, &mut resolver, &mut manifest)?;
                let path = sibling_manifest(&summary)?;
                write_manifest(&path, &manifest.finish(resolver.resolved.clone(), threads))?;
                Ok(("detect", path, summary))
            }
            Command::Pe(args) => {
                let mut manifest = ManifestBuilder::new("pe");
                resolver.resolved.insert("seed".into(), serde_json::json!(seed_flag));
                let summary = commands::pe_cmd(args, &mut resolver, &mut manifest)?;
                let out = out_dir_of(&summary)?;
                let path = out.join("pe.manifest.json");
                write_manifest(&path, &manifest.finish(resolver.resolved.clone(), threads))?;
                Ok(("pe", path, summary))
            }
            Command::Evaluate(args) => {
                let mut manifest = ManifestBuilder::new("evaluate");
                let summary = commands::evaluate(args, seed_flag, &mut resolver, &mut manifest)?;
                let out = out_dir_of(&summary)?;
                let path = out.join("manifest.json");
                write_manifest(&path, &manifest.finish(resolver.resolved.clone(), threads))?;
                Ok(("evaluate", path, summary))
            }
        }
    })?;

    if json {
        let mut value = summary;
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("table");
            map.insert("manifest".into(), serde_json::json!(manifest_path));
        }
        println!(
            "{}",
            serde_json::to_string_pretty(&value)
                .map_err(|e| CliError::Internal(e.to_string()))?
        );
    } else {
        match name {
            "detect" => print!("{}", commands::human_detect_summary(&summary)),
            "evaluate" => print!("{}", commands::human_evaluate_summary(&summary)),
            "discover" => print!("{}", commands::human_discover_summary(&summary)),
            _ => {}
        }
        println!("manifest: {}", manifest_path.display());
    }
    Ok(())
}

fn resolve_threads(resolver: &mut Resolver, flag: Option<usize>) -> CliResult<usize> {
    let env_threads = std::env::var("CAUSAL_CPD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let threads = match flag {
        Some(t) => t,
        None => resolver
            .get_opt::<usize>("threads", None)?
            .or(env_threads)
            .unwrap_or(0),
    };
    resolver
        .resolved
        .insert("threads".into(), serde_json::json!(threads));
    Ok(threads)
}

fn out_dir_of(summary: &serde_json::Value) -> CliResult<PathBuf> {
    summary
        .get("out")
        .and_then(|v| v.as_str())
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Internal("summary missing out path".into()))
}

/// `<output>.manifest.json` next to the primary output file.
fn sibling_manifest(summary: &serde_json::Value) -> CliResult<PathBuf> {
    let out = out_dir_of(summary)?;
    let mut name = out
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("out")
        .to_string();
    name.push_str(".manifest.json");
    Ok(out.with_file_name(name))
}
