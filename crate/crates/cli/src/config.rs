//! The JSON configuration file shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use interseg_core::interaction::MarginPointConfig;
use interseg_core::io::read_mask;
use interseg_core::io::read_grid;
use interseg_core::pipeline::{PipelineParams, RobotConfig};
use interseg_core::synth::{corpus, BlobParams, Sample};
use interseg_core::{Error, Result};

/// Every section is optional; command-line flags override file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pipeline: PipelineParams,
    /// Margin-point simulation; defaults follow the ground truth's rank.
    pub margin_points: Option<MarginPointConfig>,
    pub corpus: CorpusConfig,
    pub robot: RobotConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => Ok(serde_json::from_slice(&std::fs::read(p)?)?),
        }
    }
}

/// Where evaluation images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Directory of `<id>.image.sgrid` / `<id>.gt.sgrid` pairs; when absent a
    /// synthetic corpus is generated.
    pub dir: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub rank: usize,
    /// Generator parameters; rank defaults when absent.
    pub blob: Option<BlobParams>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            dir: None,
            count: 30,
            seed: 0,
            rank: 2,
            blob: None,
        }
    }
}

impl CorpusConfig {
    pub fn build(&self) -> Result<Vec<Sample>> {
        if let Some(dir) = &self.dir {
            return load_dir(dir);
        }
        let params = match (&self.blob, self.rank) {
            (Some(b), _) => b.clone(),
            (None, 2) => BlobParams::default(),
            (None, 3) => BlobParams::volume(),
            (None, r) => return Err(Error::Parameter(format!("corpus rank must be 2 or 3, got {r}"))),
        };
        Ok(corpus(self.count, &params, self.seed))
    }
}

const IMAGE_SUFFIX: &str = ".image.sgrid";
const GT_SUFFIX: &str = ".gt.sgrid";

fn load_dir(dir: &Path) -> Result<Vec<Sample>> {
    let mut ids: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(IMAGE_SUFFIX)).map(String::from))
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Parameter(format!("no *{IMAGE_SUFFIX} files in {}", dir.display())));
    }
    ids.into_iter()
        .map(|id| {
            let image = read_grid(dir.join(format!("{id}{IMAGE_SUFFIX}")))?;
            let (gt, _) = read_mask(dir.join(format!("{id}{GT_SUFFIX}")))?;
            if gt.dims() != image.dims() {
                return Err(Error::Shape(format!("{id}: mask dims {:?} vs image {:?}", gt.dims(), image.dims())));
            }
            Ok(Sample { id, image, gt })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let c: FileConfig = serde_json::from_str(r#"{"pipeline": {"crf": {"lambda": 2.0}}, "robot": {"rounds": 2}}"#).unwrap();
        assert_eq!(c.pipeline.crf.lambda, 2.0);
        assert_eq!(c.pipeline.crf.sigma, 0.1);
        assert_eq!(c.robot.rounds, 2);
        assert_eq!(c.robot.clicks_per_round, 3);
        assert_eq!(c.corpus.count, 30);
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"pipelin": {}}"#).is_err());
    }
}
