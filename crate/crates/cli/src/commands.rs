//! The five subcommands. Each resolves its options, does the work, writes
//! its outputs atomically, and returns a JSON summary for stdout.

use std::path::PathBuf;

use serde_json::{json, Value};

use causal_cpd_core::dataset::{self, ColumnSchema, Dataset, Domain, SidecarMeta};
use causal_cpd_core::detector::{detect, format_parent_set, render_table, DetectorConfig};
use causal_cpd_core::eval::{run_batch, Method, TrialBatchConfig};
use causal_cpd_core::pcmci::{discover_superset, DiscoveryConfig};
use causal_cpd_core::rulsif::{pe_series, Estimator, KernelParams, PeParams};
use causal_cpd_core::scm_gen::{random_spec, simulate, ChangeKind, GeneratorConfig};
use causal_cpd_core::segments::{build_segments, Segment};
use causal_cpd_core::svg;

use crate::args::{DetectArgs, DiscoverArgs, EvaluateArgs, GenerateArgs, PeArgs};
use crate::errors::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::outputs::{ensure_dir, write_atomic};
use crate::resolve::Resolver;

fn parse_kind(kind: &str) -> CliResult<ChangeKind> {
    match kind {
        "soft" => Ok(ChangeKind::Soft),
        "hard" => Ok(ChangeKind::Hard),
        other => Err(CliError::Usage(format!("unknown change kind {other:?}"))),
    }
}

fn parse_estimator(name: &str) -> CliResult<Estimator> {
    match name {
        "plugin" => Ok(Estimator::Plugin),
        "kernel" => Ok(Estimator::Kernel),
        other => Err(CliError::Usage(format!("unknown estimator {other:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------------
// generate

pub fn generate(
    args: GenerateArgs,
    seed_flag: Option<u64>,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Value> {
    let out: PathBuf = resolver.require("out", args.out)?;
    let n = resolver.get("n", args.n, 3)?;
    let t_len = resolver.get("t", args.t, 6000)?;
    let tau_max = resolver.get("tau_max", args.tau_max, 4)?;
    let spa = resolver.get("spa", args.spa, 2)?;
    let kind = parse_kind(&resolver.get("kind", args.kind, "soft".to_string())?)?;
    let margin = resolver.get("margin", args.margin, (t_len / 10).max(1))?;
    let min_divergence = resolver.get("min_divergence", args.min_divergence, 0.02)?;
    let min_influence = resolver.get("min_influence", args.min_influence, 0.2)?;
    let domain_text = resolver.get("domain", args.domain, "0,1".to_string())?;
    let seed = resolver.get("seed", seed_flag, 0)?;
    let spec_out: PathBuf =
        resolver.get("spec_out", args.spec_out, out.join("spec.json"))?;

    let domain = Domain::new(parse_list(&domain_text, "domain")?)?;
    let cfg = GeneratorConfig {
        n,
        t_len,
        tau_max,
        domain,
        spa_size: spa,
        change_kind: kind,
        margin,
        min_divergence,
        min_influence,
        seed,
    };
    let spec = random_spec(&cfg)?;
    let (ds, truth) = simulate(&spec)?;

    let _ = manifest;
    ensure_dir(&out)?;
    let data_path = out.join("data.csv");
    dataset::save_csv(&ds, &data_path)?;
    let meta = SidecarMeta {
        domain: ds.domain().symbols().to_vec(),
        components: Some(ds.component_names().to_vec()),
    };
    dataset::save_sidecar(&meta, &out.join("data.meta.json"))?;
    let spec_json = json!({ "spec": spec, "edge_array": spec.edge_array() });
    write_atomic(
        &spec_out,
        serde_json::to_string_pretty(&spec_json)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;
    write_atomic(
        &out.join("truth.json"),
        serde_json::to_string_pretty(&truth)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;

    Ok(json!({
        "out": out,
        "data": data_path,
        "sidecar": out.join("data.meta.json"),
        "spec": spec_out,
        "truth": out.join("truth.json"),
        "n": n,
        "t": t_len,
        "change_points": truth.change_points,
    }))
}

// ---------------------------------------------------------------------
// shared dataset loading

struct InputArgs {
    input: Option<PathBuf>,
    sidecar: Option<PathBuf>,
    no_header: bool,
    time_labels: bool,
}

fn load_input(
    args: InputArgs,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Dataset> {
    let input: PathBuf = resolver.require("in", args.input)?;
    let sidecar: Option<PathBuf> = resolver.get_opt("sidecar", args.sidecar)?;
    let no_header = resolver.get_switch("no_header", args.no_header)?;
    let time_labels = resolver.get_switch("time_labels", args.time_labels)?;

    let mut schema = ColumnSchema {
        has_header: !no_header,
        time_label_column: time_labels,
        domain: None,
        component_names: None,
    };
    if let Some(meta_path) = &sidecar {
        let meta = dataset::load_sidecar(meta_path)?;
        schema.domain = Some(meta.domain);
        schema.component_names = meta.components;
        manifest.add_input(meta_path)?;
    }
    manifest.add_input(&input)?;
    Ok(dataset::load_csv(&input, &schema)?)
}

fn discovery_config(
    resolver: &mut Resolver,
    tau_ub: Option<usize>,
    ci_alpha: Option<f64>,
    n_intervals: Option<usize>,
    pc_max_conds: Option<usize>,
    min_effect: Option<f64>,
) -> CliResult<DiscoveryConfig> {
    let defaults = DiscoveryConfig::default();
    Ok(DiscoveryConfig {
        tau_ub: resolver.get("tau_ub", tau_ub, defaults.tau_ub)?,
        alpha_level: resolver.get("ci_alpha", ci_alpha, defaults.alpha_level)?,
        n_intervals: resolver.get("n_intervals", n_intervals, defaults.n_intervals)?,
        pc_max_conds: resolver.get("pc_max_conds", pc_max_conds, defaults.pc_max_conds)?,
        min_effect: resolver.get("min_effect", min_effect, defaults.min_effect)?,
    })
}

// ---------------------------------------------------------------------
// discover

pub fn discover(
    args: DiscoverArgs,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Value> {
    let ds = load_input(
        InputArgs {
            input: args.input,
            sidecar: args.sidecar,
            no_header: args.no_header,
            time_labels: args.time_labels,
        },
        resolver,
        manifest,
    )?;
    // discover has no divergence step, so --alpha is the CI level here
    let cfg = discovery_config(
        resolver,
        args.tau_ub,
        args.alpha,
        args.n_intervals,
        args.pc_max_conds,
        args.min_effect,
    )?;
    let out: PathBuf = resolver.require("out", args.out)?;

    let graph = discover_superset(&ds, &cfg)?;
    let named = graph.to_named_json(ds.component_names());
    write_atomic(
        &out,
        serde_json::to_string_pretty(&named)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;
    Ok(json!({ "out": out, "parents": named }))
}

// ---------------------------------------------------------------------
// detect

#[allow(clippy::too_many_lines)]
pub fn detect_cmd(
    args: DetectArgs,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Value> {
    let ds = load_input(
        InputArgs {
            input: args.input,
            sidecar: args.sidecar,
            no_header: args.no_header,
            time_labels: args.time_labels,
        },
        resolver,
        manifest,
    )?;
    let discovery = discovery_config(
        resolver,
        args.tau_ub,
        args.ci_alpha,
        args.n_intervals,
        args.pc_max_conds,
        args.min_effect,
    )?;
    let pe_defaults = PeParams::default();
    let pe = PeParams {
        alpha: resolver.get("alpha", args.alpha, pe_defaults.alpha)?,
        n_w: resolver.get("nw", args.nw, pe_defaults.n_w)?,
        n_st: resolver.get("nst", args.nst, pe_defaults.n_st)?,
        estimator: parse_estimator(&resolver.get(
            "estimator",
            args.estimator,
            "plugin".to_string(),
        )?)?,
        kernel: KernelParams {
            sigma: resolver.get_opt("sigma", args.sigma)?,
            lambda: resolver.get("lambda", args.lambda, 0.01)?,
            max_centers: resolver.get("max_centers", args.max_centers, 100)?,
            cross_validate: resolver.get_switch("cv", args.cv)?,
        },
    };
    let cfg = DetectorConfig {
        discovery,
        min_segment_length: resolver.get(
            "min_segment_length",
            args.min_segment_length,
            2 * pe.n_w + 1,
        )?,
        refine: resolver.get_switch("refine", args.refine)?,
        peak_threshold: resolver.get_opt("peak_threshold", args.peak_threshold)?,
        pe,
    };
    let out: PathBuf = resolver.require("out", args.out)?;
    let table_out: Option<PathBuf> = resolver.get_opt("table", args.table)?;
    let dump_dir: Option<PathBuf> = resolver.get_opt("dump_segments", args.dump_segments)?;
    let parents_path: Option<PathBuf> = resolver.get_opt("parents", args.parents)?;

    let report = match &parents_path {
        None => detect(&ds, &cfg)?,
        Some(path) => {
            manifest.add_input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("bad parent graph JSON: {e}")))?;
            let graph = causal_cpd_core::pcmci::ParentGraph::from_named_json(
                &value,
                ds.component_names(),
            )?;
            causal_cpd_core::detector::detect_with_parents(&ds, &graph, &cfg)?
        }
    };

    write_atomic(
        &out,
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;
    let table = render_table(&report, ds.component_names());
    if let Some(path) = &table_out {
        write_atomic(path, table.as_bytes())?;
    }
    if let Some(dir) = &dump_dir {
        ensure_dir(dir)?;
        for comp in &report.components {
            let tau_eff = comp.spa.max_lag().unwrap_or(1);
            for seg in build_segments(&ds, &comp.spa, comp.component, tau_eff)? {
                if seg.is_empty() {
                    continue;
                }
                let mut csv = String::from("t,value\n");
                for (&t, &v) in seg.time_indices.iter().zip(&seg.values) {
                    csv.push_str(&format!("{t},{}\n", ds.domain().symbol(v)));
                }
                let name = format!(
                    "segment_{}_{}.csv",
                    sanitize(&comp.name),
                    seg.config_index
                );
                write_atomic(&dir.join(name), csv.as_bytes())?;
            }
        }
    }

    let summary: Vec<Value> = report
        .components
        .iter()
        .map(|comp| {
            json!({
                "component": comp.name,
                "change_time": comp.detection.as_ref().map(|d| d.projected_time),
                "peak_score": comp.detection.as_ref().map(|d| d.peak_score),
                "significant": comp.detection.as_ref().map(|d| d.significant),
                "no_detection_reason": comp.no_detection_reason,
                "parents_pre": comp
                    .parents_pre
                    .as_ref()
                    .map(|p| format_parent_set(p, ds.component_names())),
                "parents_post": comp
                    .parents_post
                    .as_ref()
                    .map(|p| format_parent_set(p, ds.component_names())),
            })
        })
        .collect();
    Ok(json!({ "out": out, "table": table, "components": summary }))
}

// ---------------------------------------------------------------------
// pe

pub fn pe_cmd(
    args: PeArgs,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Value> {
    let dump_dir: PathBuf = resolver.require("segment_dump", args.segment_dump)?;
    let out_dir: PathBuf = resolver.get("out", args.out, dump_dir.clone())?;
    let pe_defaults = PeParams::default();
    let params = PeParams {
        alpha: resolver.get("alpha", args.alpha, pe_defaults.alpha)?,
        n_w: resolver.get("nw", args.nw, pe_defaults.n_w)?,
        n_st: resolver.get("nst", args.nst, pe_defaults.n_st)?,
        estimator: parse_estimator(&resolver.get(
            "estimator",
            args.estimator,
            "plugin".to_string(),
        )?)?,
        kernel: KernelParams {
            sigma: resolver.get_opt("sigma", args.sigma)?,
            lambda: resolver.get("lambda", args.lambda, 0.01)?,
            max_centers: resolver.get("max_centers", args.max_centers, 100)?,
            cross_validate: resolver.get_switch("cv", args.cv)?,
        },
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(&dump_dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dump_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("segment_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no segment_*.csv files under {}",
            dump_dir.display()
        )));
    }

    // pool the symbol values across files so codes share one domain
    let mut raw: Vec<(PathBuf, Vec<usize>, Vec<i64>)> = Vec::new();
    let mut symbols = std::collections::BTreeSet::new();
    for path in &files {
        manifest.add_input(path)?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let mut parts = line.split(',');
            let (Some(t), Some(v)) = (parts.next(), parts.next()) else {
                return Err(CliError::Data(format!(
                    "{}:{}: expected `t,value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let t: usize = t.trim().parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad time {t:?}", path.display(), lineno + 1))
            })?;
            let v: i64 = v.trim().parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad value {v:?}", path.display(), lineno + 1))
            })?;
            times.push(t);
            values.push(v);
            symbols.insert(v);
        }
        raw.push((path.clone(), times, values));
    }
    let domain = Domain::new(symbols.into_iter().collect())?;

    ensure_dir(&out_dir)?;
    let mut outputs = Vec::new();
    for (idx, (path, times, values)) in raw.iter().enumerate() {
        let seg = Segment {
            component: idx,
            config_index: idx as u64,
            values: values
                .iter()
                .map(|&v| domain.code_of(v).expect("pooled symbol"))
                .collect(),
            time_indices: times.clone(),
        };
        let series = pe_series(&seg, domain.size(), &params)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("segment")
            .to_string();

        let mut csv = String::from("i,t_mid,score\n");
        let mut points = Vec::with_capacity(series.scores.len());
        for (i, (&score, span)) in
            series.scores.iter().zip(&series.window_spans).enumerate()
        {
            let t_mid = (span.first_end as f64 + span.second_start as f64) / 2.0;
            csv.push_str(&format!("{i},{t_mid},{score}\n"));
            points.push((t_mid, score));
        }
        let csv_path = out_dir.join(format!("pe_{stem}.csv"));
        write_atomic(&csv_path, csv.as_bytes())?;
        let chart = svg::line_chart(
            &format!("divergence series: {stem}"),
            "window midpoint (t)",
            "relative Pearson divergence",
            &[svg::Series { name: stem.clone(), points }],
        );
        let svg_path = out_dir.join(format!("pe_{stem}.svg"));
        write_atomic(&svg_path, chart.as_bytes())?;
        outputs.push(json!({
            "segment": path,
            "csv": csv_path,
            "svg": svg_path,
            "windows": series.scores.len(),
        }));
    }
    Ok(json!({ "out": out_dir, "series": outputs }))
}

// ---------------------------------------------------------------------
// evaluate

pub fn evaluate(
    args: EvaluateArgs,
    seed_flag: Option<u64>,
    resolver: &mut Resolver,
    manifest: &mut ManifestBuilder,
) -> CliResult<Value> {
    let _ = manifest;
    let out: PathBuf = resolver.require("out", args.out)?;
    let n = resolver.get("n", args.n, 3)?;
    let t_len = resolver.get("t", args.t, 6000)?;
    let tau_max = resolver.get("tau_max", args.tau_max, 4)?;
    let spa = resolver.get("spa", args.spa, 2)?;
    let kind = parse_kind(&resolver.get("kind", args.kind, "soft".to_string())?)?;
    let margin = resolver.get("margin", args.margin, (t_len / 10).max(1))?;
    let min_divergence = resolver.get("min_divergence", args.min_divergence, 0.02)?;
    let min_influence = resolver.get("min_influence", args.min_influence, 0.2)?;
    let trials = resolver.get("trials", args.trials, 100)?;
    let seed = resolver.get("seed", seed_flag, 0)?;
    let q_text = resolver.get("q", args.q, "10,25,50,100,200".to_string())?;
    let methods_text =
        resolver.get("methods", args.methods, "causal,mean_change".to_string())?;
    let setting = resolver.get(
        "setting",
        args.setting,
        format!("t{t_len}_spa{spa}_{}", if kind == ChangeKind::Soft { "soft" } else { "hard" }),
    )?;

    let discovery = discovery_config(
        resolver,
        args.tau_ub,
        args.ci_alpha,
        args.n_intervals,
        args.pc_max_conds,
        args.min_effect,
    )?;
    let pe_defaults = PeParams::default();
    let pe = PeParams {
        alpha: resolver.get("alpha", args.alpha, pe_defaults.alpha)?,
        n_w: resolver.get("nw", args.nw, pe_defaults.n_w)?,
        n_st: resolver.get("nst", args.nst, pe_defaults.n_st)?,
        ..pe_defaults
    };
    let detector = DetectorConfig {
        discovery,
        min_segment_length: 2 * pe.n_w + 1,
        refine: false,
        peak_threshold: None,
        pe,
    };

    let methods: Vec<Method> = parse_list::<String>(&methods_text, "methods")?
        .iter()
        .map(|m| match m.as_str() {
            "causal" => Ok(Method::Causal),
            "mean_change" => Ok(Method::MeanChange),
            "oracle" => Ok(Method::Oracle),
            other => Err(CliError::Usage(format!("unknown method {other:?}"))),
        })
        .collect::<CliResult<_>>()?;

    let cfg = TrialBatchConfig {
        setting: setting.clone(),
        generator: GeneratorConfig {
            n,
            t_len,
            tau_max,
            domain: Domain::binary(),
            spa_size: spa,
            change_kind: kind,
            margin,
            min_divergence,
            min_influence,
            seed: 0,
        },
        detector,
        n_trials: trials,
        seed,
        q_grid: parse_list(&q_text, "q")?,
        methods,
    };
    let report = run_batch(&cfg)?;

    ensure_dir(&out)?;
    let mut accuracy_csv = String::from("setting,method,Q,accuracy,stderr\n");
    for m in &report.methods {
        for &(q, acc) in &m.accuracy {
            let se = if m.n_scored > 0 {
                (acc * (1.0 - acc) / m.n_scored as f64).sqrt()
            } else {
                0.0
            };
            accuracy_csv.push_str(&format!(
                "{},{},{q},{acc},{se}\n",
                report.setting,
                m.method.label()
            ));
        }
    }
    write_atomic(&out.join("accuracy.csv"), accuracy_csv.as_bytes())?;

    let mut errors_csv = String::from("setting,method,mean_error,stderr,n_scored\n");
    for m in &report.methods {
        errors_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            report.setting,
            m.method.label(),
            m.mean_error,
            m.stderr_error,
            m.n_scored
        ));
    }
    write_atomic(&out.join("errors.csv"), errors_csv.as_bytes())?;

    let mut records = String::new();
    for r in &report.records {
        records.push_str(
            &serde_json::to_string(r).map_err(|e| CliError::Internal(e.to_string()))?,
        );
        records.push('\n');
    }
    write_atomic(&out.join("records.jsonl"), records.as_bytes())?;

    write_atomic(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(e.to_string()))?
            .as_bytes(),
    )?;

    let series: Vec<svg::Series> = report
        .methods
        .iter()
        .map(|m| svg::Series {
            name: m.method.label().to_string(),
            points: m.accuracy.iter().map(|&(q, a)| (q as f64, a)).collect(),
        })
        .collect();
    let chart = svg::line_chart(
        &format!("accuracy vs Q ({setting})"),
        "Q (time steps)",
        "accuracy",
        &series,
    );
    write_atomic(&out.join("curves.svg"), chart.as_bytes())?;

    let summary: Vec<Value> = report
        .methods
        .iter()
        .map(|m| {
            json!({
                "method": m.method.label(),
                "mean_error": m.mean_error,
                "stderr": m.stderr_error,
                "accuracy": m.accuracy,
                "n_scored": m.n_scored,
            })
        })
        .collect();
    Ok(json!({
        "out": out,
        "setting": report.setting,
        "methods": summary,
        "failures": report.failures.len(),
    }))
}

// re-exported for the table-vs-json stdout choice
pub fn human_detect_summary(value: &Value) -> String {
    value
        .get("table")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_default()
}

pub fn human_evaluate_summary(value: &Value) -> String {
    let mut out = String::new();
    if let Some(methods) = value.get("methods").and_then(Value::as_array) {
        out.push_str(&format!(
            "{:<12} {:>12} {:>10}  accuracy(Q)\n",
            "method", "mean_error", "stderr"
        ));
        for m in methods {
            let acc = m
                .get("accuracy")
                .and_then(Value::as_array)
                .map(|pairs| {
                    pairs
                        .iter()
                        .filter_map(|p| {
                            let q = p.get(0)?.as_u64()?;
                            let a = p.get(1)?.as_f64()?;
                            Some(format!("{q}:{a:.3}"))
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            out.push_str(&format!(
                "{:<12} {:>12.5} {:>10.5}  {}\n",
                m.get("method").and_then(Value::as_str).unwrap_or("?"),
                m.get("mean_error").and_then(Value::as_f64).unwrap_or(f64::NAN),
                m.get("stderr").and_then(Value::as_f64).unwrap_or(f64::NAN),
                acc
            ));
        }
    }
    out
}

pub fn human_discover_summary(value: &Value) -> String {
    let mut out = String::new();
    if let Some(parents) = value.get("parents").and_then(Value::as_object) {
        for (name, links) in parents {
            let rendered = links
                .as_array()
                .map(|ls| {
                    ls.iter()
                        .filter_map(|l| {
                            let comp = l.get(0)?.as_str()?;
                            let lag = l.get(1)?.as_u64()?;
                            Some(format!("{comp}[t-{lag}]"))
                        })
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_default();
            out.push_str(&format!("{name}: {{{rendered}}}\n"));
        }
    }
    out
}
