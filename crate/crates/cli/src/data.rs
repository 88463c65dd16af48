//! Dataset directory layout: `dataset.json` manifest plus `train/` and
//! `eval/` splits, each holding `clip_NNNN.flkv` files and a `manifest.csv`
//! (`file,label`).

use crate::artifacts::{read_json, write_json, DatasetDoc, DATASET_SCHEMA};
use flicker_core::dataset::{generate_dataset, SyntheticDatasetSpec};
use flicker_core::error::{Error, Result};
use flicker_core::io::{load_video, save_video};
use flicker_core::video::LabeledVideo;
use std::fs;
use std::path::Path;

pub fn write_dataset(
    dir: &Path,
    train: &SyntheticDatasetSpec,
    eval: &SyntheticDatasetSpec,
) -> Result<(usize, usize)> {
    let train_clips = generate_dataset::<f64>(train)?;
    let eval_clips = generate_dataset::<f64>(eval)?;
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join("dataset.json"),
        &DatasetDoc {
            schema: DATASET_SCHEMA.to_string(),
            train: *train,
            eval: *eval,
        },
    )?;
    write_split(&dir.join("train"), &train_clips)?;
    write_split(&dir.join("eval"), &eval_clips)?;
    Ok((train_clips.len(), eval_clips.len()))
}

fn write_split(dir: &Path, clips: &[LabeledVideo<f64>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("file,label\n");
    for (i, lv) in clips.iter().enumerate() {
        let name = format!("clip_{:04}.flkv", i);
        save_video(&dir.join(&name), &lv.video)?;
        manifest.push_str(&format!("{},{}\n", name, lv.label));
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetDoc> {
    let doc: DatasetDoc = read_json(&dir.join("dataset.json"))?;
    if doc.schema != DATASET_SCHEMA {
        return Err(Error::validation(format!(
            "{}: unexpected schema {:?}",
            dir.display(),
            doc.schema
        )));
    }
    Ok(doc)
}

/// Load one split; `split` is `"train"` or `"eval"`.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<LabeledVideo<f64>>> {
    let doc = read_manifest(dir)?;
    let num_classes = doc.train.num_classes;
    let split_dir = dir.join(split);
    let manifest = fs::read_to_string(split_dir.join("manifest.csv"))?;
    let mut clips = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        if i == 0 {
            if line != "file,label" {
                return Err(Error::validation(format!(
                    "{}: bad manifest header {:?}",
                    split_dir.display(),
                    line
                )));
            }
            continue;
        }
        let (file, label) = line.split_once(',').ok_or_else(|| {
            Error::validation(format!(
                "{}: bad manifest line {:?}",
                split_dir.display(),
                line
            ))
        })?;
        let label: usize = label.parse().map_err(|_| {
            Error::validation(format!("{}: bad label {:?}", split_dir.display(), label))
        })?;
        let video = load_video::<f64>(&split_dir.join(file))?;
        clips.push(LabeledVideo::new(video, label, num_classes)?);
    }
    if clips.is_empty() {
        return Err(Error::validation(format!(
            "{}: split {:?} holds no clips",
            dir.display(),
            split
        )));
    }
    Ok(clips)
}

/// File stem of a path, for naming models and traces in reports.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use flicker_core::video::Dims;

    #[test]
    fn round_trip_dataset_dir() {
        let dir = tempfile::tempdir().unwrap();
        let train = SyntheticDatasetSpec {
            dims: Dims::new(4, 8, 8, -1.0, 1.0).unwrap(),
            num_classes: 2,
            clips_per_class: 3,
            noise_sigma: 0.0,
            seed: 5,
        };
        let eval = SyntheticDatasetSpec {
            clips_per_class: 2,
            seed: 6,
            ..train
        };
        let (n_train, n_eval) = write_dataset(dir.path(), &train, &eval).unwrap();
        assert_eq!((n_train, n_eval), (6, 4));
        let train_clips = load_split(dir.path(), "train").unwrap();
        let eval_clips = load_split(dir.path(), "eval").unwrap();
        assert_eq!(train_clips.len(), 6);
        assert_eq!(eval_clips.len(), 4);
        assert_eq!(train_clips, generate_dataset::<f64>(&train).unwrap());
        assert_eq!(eval_clips, generate_dataset::<f64>(&eval).unwrap());
    }
}
