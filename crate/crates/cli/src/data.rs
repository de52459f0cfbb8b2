//! Dataset loading and settings-to-config translation.

use std::path::{Path, PathBuf};

use ne_core::data::{
    load_labels, load_matrix, pca_reduce, write_embedding_csv, write_raw_f32, Format,
};
use ne_core::{
    AffinityKind, DataMatrix, Embedding, InitMode, KnnAlgorithm, Method, PipelineConfig, ScaleRule,
};
use serde::{Deserialize, Serialize};

use crate::settings::Settings;
use crate::CliError;

pub const DATA_KEYS: &[&str] = &["input", "input-format", "pca", "labels", "out"];

pub const PIPELINE_KEYS: &[&str] = &[
    "method",
    "perplexity",
    "k",
    "affinity",
    "knn",
    "rho",
    "early-exaggeration",
    "learning-rate",
    "iters",
    "gamma",
    "epsilon",
    "nu",
    "theta",
    "edge-repulsion",
    "init",
    "init-std",
    "init-range",
    "components",
    "seed",
];

/// Where a run's data came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub format: String,
    pub n: usize,
    /// Dimension after the optional PCA step.
    pub dim: usize,
    pub pca: Option<usize>,
    pub labels: Option<String>,
}

pub struct Dataset {
    pub x: DataMatrix,
    pub labels: Option<Vec<i64>>,
    pub reference: DatasetRef,
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Idx => "idx",
        Format::RawF32 => "raw-f32",
    }
}

fn existing(path: &str, what: &str) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(path);
    if p.is_file() {
        Ok(std::fs::canonicalize(&p).unwrap_or(p))
    } else {
        Err(CliError::Usage(format!("{what} `{path}` does not exist")))
    }
}

fn matrix_format(path: &Path, explicit: Option<&str>) -> Result<Format, CliError> {
    match explicit {
        Some(f) => f
            .parse()
            .map_err(|e: ne_core::Error| CliError::Usage(e.to_string())),
        None => Format::from_path(path).ok_or_else(|| {
            CliError::Usage(format!(
                "cannot tell the format of {}; pass --input-format csv|idx|raw-f32",
                path.display()
            ))
        }),
    }
}

fn data_error(e: ne_core::Error) -> CliError {
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Data(m),
        other => other,
    }
}

pub fn load_dataset(s: &Settings) -> Result<Dataset, CliError> {
    let input = s.raw("input").ok_or_else(|| {
        CliError::Usage("no input given (--input or `input =` in the config)".into())
    })?;
    let path = existing(input, "input")?;
    let format = matrix_format(&path, s.raw("input-format"))?;
    let mut x = load_matrix(&path, format).map_err(data_error)?;
    let pca: Option<usize> = s.get("pca")?;
    if let Some(d) = pca {
        if d == 0 {
            return Err(CliError::Usage("pca must be at least 1".into()));
        }
        if d < x.dim() {
            x = pca_reduce(&x, d).map_err(data_error)?.scores;
        }
    }
    let labels = match s.raw("labels") {
        Some(l) => {
            let p = existing(l, "labels file")?;
            let labels = load_labels(&p).map_err(data_error)?;
            if labels.len() != x.n() {
                return Err(CliError::Data(format!(
                    "{} labels for {} points",
                    labels.len(),
                    x.n()
                )));
            }
            Some((labels, p.display().to_string()))
        }
        None => None,
    };
    Ok(Dataset {
        reference: DatasetRef {
            path: path.display().to_string(),
            format: format_name(format).to_string(),
            n: x.n(),
            dim: x.dim(),
            pca,
            labels: labels.as_ref().map(|l| l.1.clone()),
        },
        x,
        labels: labels.map(|l| l.0),
    })
}

/// Reads a two-column layout.
pub fn load_embedding(path_str: &str) -> Result<Embedding, CliError> {
    let path = existing(path_str, "embedding file")?;
    let format = matrix_format(&path, None)?;
    let m = load_matrix(&path, format).map_err(data_error)?;
    if m.dim() != 2 {
        return Err(CliError::Data(format!(
            "{path_str}: expected 2 columns, found {}",
            m.dim()
        )));
    }
    Embedding::new(m.rows().map(|r| [r[0], r[1]]).collect()).map_err(data_error)
}

pub fn write_embedding(path: &Path, y: &Embedding, format: &str) -> Result<(), CliError> {
    match format {
        "csv" => write_embedding_csv(path, y)?,
        "raw-f32" => write_raw_f32(path, y.n(), 2, y.coords().iter().flat_map(|p| *p))?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown output format `{other}` (csv or raw-f32)"
            )))
        }
    }
    Ok(())
}

pub fn embedding_file_name(format: &str) -> &'static str {
    if format == "raw-f32" {
        "embedding.f32"
    } else {
        "embedding.csv"
    }
}

fn parse_enum<T: std::str::FromStr<Err = ne_core::Error>>(
    s: &Settings,
    key: &str,
) -> Result<Option<T>, CliError> {
    s.raw(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| CliError::Usage(format!("`{key}`: {e}")))
        })
        .transpose()
}

/// Builds a run configuration; unset keys keep the method's defaults.
pub fn pipeline_config(s: &Settings) -> Result<PipelineConfig, CliError> {
    let method: Method = parse_enum(s, "method")?.ok_or_else(|| {
        CliError::Usage("no method given (--method tsne|umap-ns|umap-bh|fa2|le)".into())
    })?;
    let d = PipelineConfig::new(method);
    let affinity: Option<AffinityKind> = parse_enum(s, "affinity")?;
    let knn: Option<KnnAlgorithm> = parse_enum(s, "knn")?;
    let init = match s.raw("init") {
        None | Some("pca") => InitMode::Pca,
        Some("random") => InitMode::Random,
        Some(path) => InitMode::Provided(load_embedding(path)?),
    };
    let init_scale = match (s.get::<f64>("init-std")?, s.get_list::<f64>("init-range")?) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give init-std or init-range, not both".into(),
            ))
        }
        (Some(sd), None) => Some(ScaleRule::StdDev(sd)),
        (None, Some(r)) if r.len() == 2 => Some(ScaleRule::Range(r[0], r[1])),
        (None, Some(_)) => {
            return Err(CliError::Usage(
                "init-range takes two values `lo,hi`".into(),
            ))
        }
        (None, None) => None,
    };
    Ok(PipelineConfig {
        method,
        perplexity: s.get_or("perplexity", d.perplexity)?,
        k: s.get("k")?,
        affinity,
        knn_algorithm: knn.unwrap_or(d.knn_algorithm),
        rho: s.get_or("rho", d.rho)?,
        early_exaggeration: s.get_or("early-exaggeration", d.early_exaggeration)?,
        learning_rate: s.get("learning-rate")?,
        iters: s.get("iters")?,
        gamma: s.get_or("gamma", d.gamma)?,
        epsilon: s.get_or("epsilon", d.epsilon)?,
        nu: s.get_or("nu", d.nu)?,
        theta: s.get_or("theta", d.theta)?,
        edge_repulsion: s.get_or("edge-repulsion", d.edge_repulsion)?,
        init,
        init_scale,
        components: s.get_or("components", d.components)?,
        seed: s.get_or("seed", d.seed)?,
    })
}

pub fn output_dir(s: &Settings) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(
        s.raw("out")
            .ok_or_else(|| CliError::Usage("no output directory given (--out)".into()))?,
    );
    std::fs::create_dir_all(&out).map_err(|e| {
        CliError::Usage(format!(
            "cannot create output directory {}: {e}",
            out.display()
        ))
    })?;
    Ok(out)
}
