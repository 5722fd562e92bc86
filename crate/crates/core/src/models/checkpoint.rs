use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unic_tensor::serialize;

use super::classifier::UniClassifier;
use super::denoiser::{Denoiser, DenoiserConfig};
use super::params::Params;
use super::train::TrainConfig;

/// `index.json` of a checkpoint directory; each parameter lives next to it
/// in `<name>.tensor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub kind: String,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub model: DenoiserConfig,
    pub train: Option<TrainConfig>,
    pub data_hash: Option<String>,
    /// Encoder stage feeding the classifier head (classifiers only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_stage: Option<String>,
    pub encoder_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Tensor {
        path: String,
        source: unic_tensor::TensorError,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn io(path: &Path) -> impl Fn(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_params(dir: &Path, params: &Params) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, t) in params.iter() {
        let path = dir.join(format!("{name}.tensor"));
        serialize::save(&path, t).map_err(|source| CheckpointError::Tensor {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

fn read_params(dir: &Path, index: &CheckpointIndex) -> Result<Params> {
    let mut p = Params::new();
    for (name, shape) in index.names.iter().zip(&index.shapes) {
        let path = dir.join(format!("{name}.tensor"));
        let t = serialize::load(&path).map_err(|source| CheckpointError::Tensor {
            path: path.display().to_string(),
            source,
        })?;
        if t.shape() != shape.as_slice() {
            return Err(CheckpointError::Invalid(format!(
                "{}: shape {:?}, index says {:?}",
                path.display(),
                t.shape(),
                shape
            )));
        }
        p.insert(name.clone(), t);
    }
    Ok(p)
}

fn write_index(dir: &Path, index: &CheckpointIndex) -> Result<()> {
    let path = dir.join("index.json");
    let text = serde_json::to_string_pretty(index).map_err(|source| CheckpointError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(io(&path))
}

fn read_index(dir: &Path, kind: &str) -> Result<CheckpointIndex> {
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let index: CheckpointIndex =
        serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
            path: path.display().to_string(),
            source,
        })?;
    if index.kind != kind {
        return Err(CheckpointError::Invalid(format!(
            "{}: expected a {kind} checkpoint, found {}",
            path.display(),
            index.kind
        )));
    }
    Ok(index)
}

fn index_for(kind: &str, params: &Params, model: &DenoiserConfig) -> CheckpointIndex {
    CheckpointIndex {
        kind: kind.into(),
        names: params.iter().map(|(k, _)| k.clone()).collect(),
        shapes: params.iter().map(|(_, v)| v.shape().to_vec()).collect(),
        model: model.clone(),
        train: None,
        data_hash: None,
        feature_stage: None,
        encoder_hash: String::new(),
    }
}

pub fn save_denoiser(
    dir: &Path,
    model: &Denoiser,
    train: Option<&TrainConfig>,
    data_hash: Option<&str>,
) -> Result<CheckpointIndex> {
    write_params(dir, &model.params)?;
    let mut index = index_for("denoiser", &model.params, &model.config);
    index.train = train.cloned();
    index.data_hash = data_hash.map(str::to_owned);
    index.encoder_hash = model.encoder_params().hash();
    write_index(dir, &index)?;
    Ok(index)
}

pub fn load_denoiser(dir: &Path) -> Result<Denoiser> {
    let index = read_index(dir, "denoiser")?;
    let params = read_params(dir, &index)?;
    Ok(Denoiser {
        config: index.model,
        params,
    })
}

pub fn save_classifier(
    dir: &Path,
    clf: &UniClassifier,
    train: Option<&TrainConfig>,
    data_hash: Option<&str>,
) -> Result<CheckpointIndex> {
    let mut all = clf.encoder.clone();
    all.extend(clf.head.clone());
    write_params(dir, &all)?;
    let mut index = index_for("classifier", &all, &clf.config);
    index.train = train.cloned();
    index.data_hash = data_hash.map(str::to_owned);
    index.feature_stage = Some(UniClassifier::FEATURE_STAGE.into());
    index.encoder_hash = clf.encoder.hash();
    write_index(dir, &index)?;
    Ok(index)
}

pub fn load_classifier(dir: &Path) -> Result<UniClassifier> {
    let index = read_index(dir, "classifier")?;
    let all = read_params(dir, &index)?;
    let clf = UniClassifier {
        config: index.model.clone(),
        encoder: all.subset("encoder."),
        head: all.subset("head."),
    };
    if clf.encoder.hash() != index.encoder_hash {
        return Err(CheckpointError::Invalid(format!(
            "{}: encoder hash does not match index",
            dir.display()
        )));
    }
    Ok(clf)
}
