//! JSON dataset/model files, CSV exports and synthetic data generators.
//!
//! JSON output is canonical: keys sorted, floats in shortest round-trip
//! form, two-space indentation and a trailing newline. Saving what was
//! loaded reproduces the file byte for byte.

mod export;
mod synth;

pub use export::{
    write_alpha_trace_csv, write_folds_csv, write_grid_csv, write_profile_csv, write_trajectory_csv,
};
pub use synth::{gen_pickplace, gen_reaching, ReachingSpec, TargetLayout, TraySpec};

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalx::ConstraintBoxes;
use crate::gaussian::Gaussian;
use crate::relevance::StepGaussians;
use crate::tpmodel::{Dataset, DatasetMeta, Demonstration, TaskFrame, TpGmm};

pub const SCHEMA_VERSION: u32 = 1;

/// Serialises `value` as canonical JSON.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Parses JSON, reporting the path of the first offending field.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl FrameJson {
    pub fn from_frame(f: &TaskFrame) -> Self {
        FrameJson {
            a: rows_of(f.a()),
            b: f.b().iter().copied().collect(),
        }
    }

    pub fn to_frame(&self, path: &str) -> Result<TaskFrame> {
        let d = self.b.len();
        let a = matrix_from_rows(&self.a, d, d, &format!("{path}.A"))?;
        TaskFrame::new(a, DVector::from_vec(self.b.clone())).map_err(|e| Error::schema(format!("{path}.A"), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoJson {
    pub points: Vec<Vec<f64>>,
    pub frames: Vec<FrameJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub channel_names: Vec<String>,
    pub demos: Vec<DemoJson>,
    /// Free-form provenance (generator settings, seed).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl DatasetFile {
    pub fn from_dataset(ds: &Dataset) -> Self {
        DatasetFile {
            schema_version: SCHEMA_VERSION,
            name: ds.meta.name.clone(),
            d: ds.dim(),
            p: ds.num_frames(),
            channel_names: ds.meta.channel_names.clone(),
            demos: ds
                .demos()
                .iter()
                .map(|demo| DemoJson {
                    points: rows_of(&demo.points),
                    frames: demo.frames.iter().map(FrameJson::from_frame).collect(),
                })
                .collect(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {}", self.schema_version),
            ));
        }
        if self.demos.is_empty() {
            return Err(Error::schema("demos", "no demonstrations"));
        }
        if !self.channel_names.is_empty() && self.channel_names.len() != self.d {
            return Err(Error::schema("channel_names", format!("expected {} names", self.d)));
        }
        let demos = self
            .demos
            .iter()
            .enumerate()
            .map(|(m, demo)| {
                let path = format!("demos[{m}]");
                if demo.points.is_empty() {
                    return Err(Error::schema(format!("{path}.points"), "no points"));
                }
                let points = matrix_from_rows(&demo.points, demo.points.len(), self.d, &format!("{path}.points"))?;
                if demo.frames.len() != self.p {
                    return Err(Error::schema(
                        format!("{path}.frames"),
                        format!("expected {} frames, found {}", self.p, demo.frames.len()),
                    ));
                }
                let frames = demo
                    .frames
                    .iter()
                    .enumerate()
                    .map(|(j, f)| {
                        let fp = format!("{path}.frames[{j}]");
                        if f.b.len() != self.d {
                            return Err(Error::schema(format!("{fp}.b"), format!("expected {} values", self.d)));
                        }
                        f.to_frame(&fp).map_err(|e| match e {
                            Error::Schema { path, message } => Error::schema(path, format!("frame {j}: {message}")),
                            other => other,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Demonstration { points, frames })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            DatasetMeta {
                name: self.name.clone(),
                channel_names: self.channel_names.clone(),
            },
            demos,
        )
        .map_err(|e| Error::schema("demos", e.to_string()))
    }
}

pub fn dataset_to_json(ds: &Dataset) -> Result<String> {
    to_canonical_json(&DatasetFile::from_dataset(ds))
}

pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    from_json_str::<DatasetFile>(text)?.to_dataset()
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_json(&fs::read_to_string(path)?)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_json(ds)?)?;
    Ok(())
}

/// Loads a list of frames (`[{A, b}, ...]`), as used for reproduction requests.
pub fn frames_from_json(text: &str) -> Result<Vec<TaskFrame>> {
    let raw: Vec<FrameJson> = from_json_str(text)?;
    raw.iter()
        .enumerate()
        .map(|(j, f)| f.to_frame(&format!("[{j}]")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianJson {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianJson {
    pub fn from_gaussian(g: &Gaussian) -> Self {
        GaussianJson {
            mean: g.mean().iter().copied().collect(),
            cov: rows_of(g.cov()),
        }
    }

    pub fn to_gaussian(&self, path: &str) -> Result<Gaussian> {
        let d = self.mean.len();
        let cov = matrix_from_rows(&self.cov, d, d, &format!("{path}.cov"))?;
        Gaussian::new(DVector::from_vec(self.mean.clone()), cov).map_err(|e| Error::schema(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGaussiansJson {
    pub eps: f64,
    /// `steps[n][j]`
    pub steps: Vec<Vec<GaussianJson>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmTraceJson {
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
}

/// Provenance carried with a trained model: what grid sweeps and reports
/// need from the training data without reloading it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub dataset_name: String,
    pub channel_names: Vec<String>,
    pub em: EmTraceJson,
    /// Frames of every training demonstration, `demo_frames[m][j]`.
    pub demo_frames: Vec<Vec<FrameJson>>,
    pub constraint_boxes: Option<ConstraintBoxes>,
    pub alpha_search: Option<AlphaSearchJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSearchJson {
    pub bounds: (f64, f64),
    pub scan_points: usize,
    pub loss_mode: crate::optimize::WeightMode,
    pub loss_star: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub priors: Vec<f64>,
    /// `frames_models[j][i]`: component `i` in frame `j`.
    pub frames_models: Vec<Vec<GaussianJson>>,
    pub step_gaussians: Option<StepGaussiansJson>,
    pub times: Vec<f64>,
    pub alpha: Option<f64>,
    pub window: usize,
    pub training_meta: TrainingMeta,
    /// Free-form run metadata (resolved configuration, input hashes).
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl ModelFile {
    pub fn model(&self) -> Result<TpGmm> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::schema("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.frames_models.len() != self.p {
            return Err(Error::schema("frames_models", format!("expected {} frames", self.p)));
        }
        let comps = self
            .frames_models
            .iter()
            .enumerate()
            .map(|(j, frame)| {
                if frame.len() != self.k {
                    return Err(Error::schema(format!("frames_models[{j}]"), format!("expected {} components", self.k)));
                }
                frame
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let path = format!("frames_models[{j}][{i}]");
                        if g.mean.len() != self.d {
                            return Err(Error::schema(format!("{path}.mean"), format!("expected {} values", self.d)));
                        }
                        g.to_gaussian(&path)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        TpGmm::new(self.priors.clone(), comps).map_err(|e| Error::schema("priors", e.to_string()))
    }

    pub fn step_gaussians(&self) -> Result<Option<StepGaussians>> {
        let Some(sg) = &self.step_gaussians else {
            return Ok(None);
        };
        let steps = sg
            .steps
            .iter()
            .enumerate()
            .map(|(n, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, g)| g.to_gaussian(&format!("step_gaussians.steps[{n}][{j}]")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        StepGaussians::new(steps, sg.eps).map(Some)
    }

    pub fn demo_frames(&self) -> Result<Vec<Vec<TaskFrame>>> {
        self.training_meta
            .demo_frames
            .iter()
            .enumerate()
            .map(|(m, fs)| {
                fs.iter()
                    .enumerate()
                    .map(|(j, f)| f.to_frame(&format!("training_meta.demo_frames[{m}][{j}]")))
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = from_json_str(text)?;
        file.model()?;
        file.step_gaussians()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelFile::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn gaussians_json(gs: &[Gaussian]) -> Vec<GaussianJson> {
    gs.iter().map(GaussianJson::from_gaussian).collect()
}

pub fn step_gaussians_json(sg: &StepGaussians) -> StepGaussiansJson {
    StepGaussiansJson {
        eps: sg.eps(),
        steps: sg.steps().iter().map(|row| gaussians_json(row)).collect(),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::schema(path, format!("expected {nrows} rows, found {}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::schema(format!("{path}[{r}]"), format!("expected {ncols} values, found {}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "schema_version": 1, "name": "tiny", "D": 2, "P": 1, "channel_names": ["t", "x"],
      "demos": [
        {"points": [[1, 0.0], [2, 1.0]], "frames": [{"A": [[1, 0], [0, 1]], "b": [0, 0]}]},
        {"points": [[1, 0.5], [2, 1.5]], "frames": [{"A": [[1, 0], [0, 2]], "b": [0, 1]}]}
      ]
    }"#;

    #[test]
    fn loads_minimal_file() {
        let ds = dataset_from_json(MINIMAL).unwrap();
        assert_eq!(ds.num_demos(), 2);
        assert_eq!(ds.num_frames(), 1);
        assert_eq!(ds.meta.name, "tiny");
    }

    #[test]
    fn canonical_round_trip() {
        let ds = dataset_from_json(MINIMAL).unwrap();
        let a = dataset_to_json(&ds).unwrap();
        let b = dataset_to_json(&dataset_from_json(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        // keys come out sorted
        let d = a.find("\"D\"").unwrap();
        let p = a.find("\"P\"").unwrap();
        let demos = a.find("\"demos\"").unwrap();
        assert!(d < p && p < demos);
    }

    #[test]
    fn singular_frame_names_its_location() {
        let bad = MINIMAL.replace(r#"[[1, 0], [0, 2]]"#, r#"[[1, 0], [0, 0]]"#);
        let err = dataset_from_json(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("demos[1].frames[0]"), "{msg}");
        assert!(msg.contains("frame 0"), "{msg}");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = MINIMAL.replace(r#"[2, 1.5]"#, r#"[2, "x"]"#);
        let msg = dataset_from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("demos[1].points[1]"), "{msg}");

        let ragged = MINIMAL.replace(r#"[2, 1.5]"#, r#"[2, 1.5, 3]"#);
        let msg = dataset_from_json(&ragged).unwrap_err().to_string();
        assert!(msg.contains("demos[1].points[1]"), "{msg}");

        let unknown = MINIMAL.replace(r#""name""#, r#""extra": 1, "name""#);
        assert!(dataset_from_json(&unknown).is_err());
    }

    #[test]
    fn frames_snippet() {
        let fs = frames_from_json(r#"[{"A": [[1,0,0],[0,1,0],[0,0,1]], "b": [0, 1, 2]}]"#).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].b()[2], 2.0);
    }
}
