//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use ne_core::data::{gen_gaussian_chain, write_csv, write_raw_f32, Format};
use ne_core::metrics::{
    distance_correlation, embedding_span, estimate_effective_gamma, knn_recall, log_grid,
    GammaProtocol, Reference,
};
use ne_core::optimize::{NegSampleConfig, UmapFullConfig};
use ne_core::pipeline::{default_rho_grid, embed_prepared, prepare, rho_sweep, SweepMetrics};
use ne_core::{Method, PipelineConfig};
use serde_json::json;

use crate::data::{
    embedding_file_name, load_dataset, load_embedding, output_dir, pipeline_config,
    write_embedding, DATA_KEYS, PIPELINE_KEYS,
};
use crate::manifest::{RunManifest, FILE_NAME};
use crate::settings::Settings;
use crate::svg;
use crate::CliError;

fn keys<'a>(groups: &[&[&'a str]]) -> Vec<&'a str> {
    groups.concat()
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn embed(s: &Settings) -> Result<(), CliError> {
    s.check_keys(&keys(&[
        DATA_KEYS,
        PIPELINE_KEYS,
        &["output-format", "svg"],
    ]))?;
    let cfg = pipeline_config(s)?;
    let format = s.raw("output-format").unwrap_or("csv").to_string();
    if !matches!(format.as_str(), "csv" | "raw-f32") {
        return Err(CliError::Usage(format!(
            "unknown output format `{format}` (csv or raw-f32)"
        )));
    }
    let want_svg: bool = s.get_or("svg", false)?;
    let data = load_dataset(s)?;
    let out = output_dir(s)?;

    let mut manifest = RunManifest::new("embed", s, serde_json::to_value(&cfg)?, vec![cfg.seed]);
    manifest.dataset = Some(data.reference.clone());
    let trace_path = out.join("trace.json");

    info!("embedding {} points with {}", data.x.n(), cfg.method);
    let result = prepare(&data.x, &cfg).and_then(|p| embed_prepared(&data.x, &p, &cfg));
    let output = match result {
        Ok(o) => o,
        Err(ne_core::Error::Diverged {
            iter,
            reason,
            trace,
        }) => {
            trace.write_json(&trace_path)?;
            manifest.output("trace", &trace_path);
            manifest.write(&out.join(FILE_NAME))?;
            return Err(CliError::Diverged(format!(
                "iteration {iter}: {reason}; partial trace in {}",
                trace_path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let emb_path = out.join(embedding_file_name(&format));
    write_embedding(&emb_path, &output.embedding, &format)?;
    manifest.output("embedding", &emb_path);
    announce(&emb_path);
    if let Some(trace) = &output.trace {
        trace.write_json(&trace_path)?;
        manifest.output("trace", &trace_path);
        announce(&trace_path);
        if let Some(z) = trace.final_z_over_n() {
            println!("final Z/n = {z}");
        }
    }
    if let Some(vals) = &output.eigenvalues {
        let p = out.join("eigenvalues.json");
        std::fs::write(&p, serde_json::to_string_pretty(vals)?)?;
        manifest.output("eigenvalues", &p);
        announce(&p);
    }
    if want_svg {
        let p = out.join("embedding.svg");
        let title = format!("{} (n = {})", cfg.method, data.x.n());
        svg::write(
            &p,
            &svg::scatter(&output.embedding, data.labels.as_deref(), &title),
        )?;
        manifest.output("svg", &p);
        announce(&p);
    }
    let mp = out.join(FILE_NAME);
    manifest.write(&mp)?;
    announce(&mp);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn sweep(s: &Settings) -> Result<(), CliError> {
    let extra = [
        "rhos",
        "reference",
        "reference-method",
        "recall-k",
        "recall-samples",
        "dcor-samples",
    ];
    s.check_keys(&keys(&[DATA_KEYS, PIPELINE_KEYS, &extra]))?;
    let mut s = s.clone();
    if s.raw("method").is_none() {
        s.set("method", "tsne");
    }
    let cfg = pipeline_config(&s)?;
    if cfg.method != Method::Tsne {
        return Err(CliError::Usage(
            "sweeps run t-SNE; drop --method or set it to tsne".into(),
        ));
    }
    let grid = s.get_list::<f64>("rhos")?.unwrap_or_else(default_rho_grid);
    if grid.is_empty() || grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(CliError::Usage(
            "rhos must be a nonempty list of positive values".into(),
        ));
    }
    let d = SweepMetrics::default();
    let metrics = SweepMetrics {
        recall_k: s.get_or("recall-k", d.recall_k)?,
        recall_samples: s.get_or("recall-samples", d.recall_samples)?,
        dcor_samples: s.get_or("dcor-samples", d.dcor_samples)?,
        seed: cfg.seed,
    };
    let data = load_dataset(&s)?;
    let out = output_dir(&s)?;
    let prepared = prepare(&data.x, &cfg)?;
    let mut manifest = RunManifest::new(
        "sweep",
        &s,
        json!({ "pipeline": cfg, "rhos": grid, "metrics": metrics }),
        vec![cfg.seed],
    );
    manifest.dataset = Some(data.reference.clone());

    let reference = match (s.raw("reference"), s.raw("reference-method")) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give reference or reference-method, not both".into(),
            ));
        }
        (Some(path), None) => {
            let y = load_embedding(path)?;
            if y.n() != data.x.n() {
                return Err(CliError::Data(format!(
                    "reference has {} points, data has {}",
                    y.n(),
                    data.x.n()
                )));
            }
            Some(y)
        }
        (None, Some(m)) => {
            let method: Method = m.parse()?;
            // A t-SNE reference reuses the sweep's settings at `rho`.
            let y = if method == Method::Tsne {
                embed_prepared(&data.x, &prepared, &cfg)?.embedding
            } else {
                let rc = PipelineConfig {
                    seed: cfg.seed,
                    knn_algorithm: cfg.knn_algorithm,
                    init: cfg.init.clone(),
                    ..PipelineConfig::new(method)
                };
                ne_core::pipeline::embed(&data.x, &rc)?.1.embedding
            };
            let p = out.join("reference.csv");
            write_embedding(&p, &y, "csv")?;
            manifest.output("reference", &p);
            announce(&p);
            Some(y)
        }
        (None, None) => None,
    };

    let rows = rho_sweep(
        &data.x,
        &prepared,
        &cfg,
        &grid,
        reference.as_ref(),
        &metrics,
    )?;
    let mut table = String::from("rho,dcor,recall,z_over_n,span\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            r.rho,
            fmt_opt(r.dcor),
            r.recall,
            fmt_opt(r.final_z_over_n),
            r.span
        );
    }
    let tp = out.join("sweep.csv");
    std::fs::write(&tp, table)?;
    manifest.output("table", &tp);
    announce(&tp);

    let mut series = vec![svg::Series {
        name: "kNN recall",
        points: rows.iter().map(|r| (r.rho, r.recall)).collect(),
    }];
    if reference.is_some() {
        series.insert(
            0,
            svg::Series {
                name: "dCor",
                points: rows
                    .iter()
                    .map(|r| (r.rho, r.dcor.unwrap_or(f64::NAN)))
                    .collect(),
            },
        );
    }
    let sp = out.join("sweep.svg");
    svg::write(
        &sp,
        &svg::curves_log_x(&series, "exaggeration sweep", "rho", "value"),
    )?;
    manifest.output("svg", &sp);
    announce(&sp);
    if let Some(best) = rows
        .iter()
        .filter_map(|r| r.dcor.map(|d| (r.rho, d)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
    {
        println!("max dCor {} at rho = {}", best.1, best.0);
    }
    let mp = out.join(FILE_NAME);
    manifest.write(&mp)?;
    announce(&mp);
    Ok(())
}

pub fn match_gamma(s: &Settings) -> Result<(), CliError> {
    let extra = [
        "sizes",
        "gamma-hi",
        "gamma-lo",
        "gamma-count",
        "k",
        "nu",
        "epochs",
        "iters",
        "reference-gamma",
        "theta",
        "seed",
    ];
    s.check_keys(&keys(&[DATA_KEYS, &extra]))?;
    let sizes = s
        .get_list::<usize>("sizes")?
        .unwrap_or_else(|| vec![2000, 3500, 5000, 7500, 10_000]);
    let grid = log_grid(
        s.get_or("gamma-hi", 0.01)?,
        s.get_or("gamma-lo", 1e-5)?,
        s.get_or("gamma-count", 40)?,
    );
    let d = GammaProtocol::default();
    let seed = s.get_or("seed", d.seed)?;
    let reference = match s.get::<f64>("reference-gamma")? {
        Some(gamma) => Reference::FullGradient { gamma },
        None => Reference::NegativeSampling(NegSampleConfig {
            nu: s.get_or("nu", 5)?,
            epochs: s.get_or("epochs", NegSampleConfig::default().epochs)?,
            ..NegSampleConfig::default()
        }),
    };
    let mut full = UmapFullConfig {
        theta: s.get_or("theta", d.full.theta)?,
        ..d.full.clone()
    };
    full.schedule.total_iters = s.get_or("iters", full.schedule.total_iters)?;
    let protocol = GammaProtocol {
        k: s.get_or("k", d.k)?,
        reference,
        full,
        seed,
    };
    let data = load_dataset(s)?;
    let out = output_dir(s)?;
    let mut manifest = RunManifest::new(
        "match-gamma",
        s,
        json!({ "sizes": sizes, "gamma_grid": grid, "protocol": protocol }),
        vec![seed],
    );
    manifest.dataset = Some(data.reference.clone());

    let est = estimate_effective_gamma(&data.x, &sizes, &grid, &protocol)?;
    let mut table = String::from("n,reference_span,gamma_hat,skipped\n");
    for e in &est.sizes {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            e.n,
            fmt_opt(e.reference_span),
            fmt_opt(e.gamma_hat),
            e.skipped
        );
    }
    let tp = out.join("gamma.csv");
    std::fs::write(&tp, table)?;
    manifest.output("table", &tp);
    announce(&tp);
    let jp = out.join("gamma.json");
    std::fs::write(&jp, serde_json::to_string_pretty(&est)?)?;
    manifest.output("report", &jp);
    announce(&jp);

    let points: Vec<(f64, f64)> = est
        .sizes
        .iter()
        .filter_map(|e| e.gamma_hat.map(|g| (e.n as f64, g)))
        .collect();
    let fit = est.slope.map(|slope| {
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0.log10()).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1.log10()).sum::<f64>() / m;
        (my - slope * mx, slope)
    });
    let sp = out.join("gamma.svg");
    svg::write(
        &sp,
        &svg::loglog_fit(&points, fit, "effective gamma by size", "n", "gamma"),
    )?;
    manifest.output("svg", &sp);
    announce(&sp);
    match est.slope {
        Some(slope) => println!("log-log slope = {slope}"),
        None => println!("log-log slope undefined (fewer than two sizes with an estimate)"),
    }
    for e in &est.sizes {
        println!("n = {}: gamma_hat = {}", e.n, fmt_opt(e.gamma_hat));
    }
    let mp = out.join(FILE_NAME);
    manifest.write(&mp)?;
    announce(&mp);
    Ok(())
}

pub fn metrics(s: &Settings) -> Result<(), CliError> {
    let extra = [
        "embedding",
        "reference",
        "perplexity",
        "affinity",
        "knn",
        "recall-k",
        "recall-samples",
        "dcor-samples",
        "seed",
    ];
    s.check_keys(&keys(&[DATA_KEYS, &extra]))?;
    let mut s = s.clone();
    s.set("method", "tsne");
    let cfg = pipeline_config(&s)?;
    let d = SweepMetrics::default();
    let recall_k = s.get_or("recall-k", d.recall_k)?;
    let data = load_dataset(&s)?;
    let y = load_embedding(
        s.raw("embedding")
            .ok_or_else(|| CliError::Usage("no layout given (--embedding)".into()))?,
    )?;
    if y.n() != data.x.n() {
        return Err(CliError::Data(format!(
            "layout has {} points, data has {}",
            y.n(),
            data.x.n()
        )));
    }
    let out = output_dir(&s)?;
    let prepared = prepare(&data.x, &cfg)?;
    let mut reports = vec![
        knn_recall(
            &prepared.affinities,
            &y,
            recall_k,
            s.get_or("recall-samples", d.recall_samples)?,
            cfg.seed,
        )?,
        embedding_span(&y),
    ];
    if let Some(r) = s.raw("reference") {
        let r = load_embedding(r)?;
        reports.push(distance_correlation(
            &y,
            &r,
            s.get_or("dcor-samples", d.dcor_samples)?,
            cfg.seed,
        )?);
    }
    for r in &reports {
        println!("{} = {}", r.metric, r.value);
    }
    let mut manifest = RunManifest::new("metrics", &s, serde_json::to_value(&cfg)?, vec![cfg.seed]);
    manifest.dataset = Some(data.reference.clone());
    let rp = out.join("metrics.json");
    std::fs::write(&rp, serde_json::to_string_pretty(&reports)?)?;
    manifest.output("report", &rp);
    announce(&rp);
    let mp = out.join(FILE_NAME);
    manifest.write(&mp)?;
    announce(&mp);
    Ok(())
}

pub fn gen(s: &Settings) -> Result<(), CliError> {
    s.check_keys(&[
        "clusters",
        "per",
        "dim",
        "spacing",
        "seed",
        "out",
        "labels-out",
    ])?;
    let clusters = s.get_or("clusters", 20)?;
    let per = s.get_or("per", 1000)?;
    let dim = s.get_or("dim", 50)?;
    let spacing = s.get_or("spacing", 6.0)?;
    let seed = s.get_or("seed", 0)?;
    let out = PathBuf::from(
        s.raw("out")
            .ok_or_else(|| CliError::Usage("no output file given (--out)".into()))?,
    );
    let format = Format::from_path(&out)
        .filter(|f| *f != Format::Idx)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{}: output must end in .csv or .f32",
                out.display()
            ))
        })?;
    let chain = gen_gaussian_chain(clusters, per, dim, spacing, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    match format {
        Format::Csv => write_csv(&out, &chain.data)?,
        _ => write_raw_f32(
            &out,
            chain.data.n(),
            chain.data.dim(),
            chain.data.values().iter().copied(),
        )?,
    }
    announce(&out);
    let labels = s.raw("labels-out").map_or_else(
        || PathBuf::from(format!("{}.labels.txt", out.display())),
        PathBuf::from,
    );
    let text: String = chain.labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&labels, text)?;
    announce(&labels);

    let mut manifest = RunManifest::new(
        "gen",
        s,
        json!({ "clusters": clusters, "per": per, "dim": dim, "spacing": spacing }),
        vec![seed],
    );
    manifest.output("data", &out);
    manifest.output("labels", &labels);
    let mp = PathBuf::from(format!("{}.manifest.json", out.display()));
    manifest.write(&mp)?;
    announce(&mp);
    Ok(())
}
