//! On-disk formats.
//!
//! Feature tensors: 8-byte magic `TASFEAT1`, then `T` and `F` as little-endian
//! `u64`, then `T * F` little-endian `f32` values in row-major order.
//!
//! Dataset directory layout:
//!
//! ```text
//! mapping.txt            "<index> <action>" per line
//! activities.txt         "<index> <activity>" per line (optional)
//! video_activity.txt     "<video_id> <activity>" per line (optional)
//! features/<id>.feat
//! groundTruth/<id>.txt   one action name per frame
//! splits/labeled.txt     one video id per line
//! splits/unlabeled.txt
//! splits/test.txt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{ActionVocabulary, Dataset, DatasetSplit, FeatureSequence, LabelSequence, LabelSource};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"TASFEAT1";
const HEADER_LEN: usize = 8 + 16;

pub fn encode_features(data: &Array2<f32>) -> Vec<u8> {
    let (t, f) = data.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * f);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(t as u64).to_le_bytes());
    out.extend_from_slice(&(f as u64).to_le_bytes());
    for v in data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let malformed = |reason: String| Error::MalformedFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(malformed("bad magic".into()));
    }
    let t = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let f = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = t
        .checked_mul(f)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| malformed(format!("header ({t}, {f}) overflows")))?;
    if expected != bytes.len() as u64 {
        return Err(malformed(format!(
            "header ({t}, {f}) needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((t as usize, f as usize), values).map_err(|e| malformed(e.to_string()))
}

pub fn load_feature_sequence(path: &Path, video_id: &str, activity: Option<usize>) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let data = decode_features(&bytes, path)?;
    FeatureSequence::new(video_id, data, activity)
}

pub fn save_feature_sequence(path: &Path, features: &FeatureSequence) -> Result<()> {
    write_atomic(path, &encode_features(&features.data))
}

pub fn load_labels(path: &Path, vocab: &ActionVocabulary) -> Result<LabelSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_labels(&text, &video_id, vocab)
}

pub fn parse_labels(text: &str, video_id: &str, vocab: &ActionVocabulary) -> Result<LabelSequence> {
    let labels = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, name)| {
            vocab.action_index(name).ok_or_else(|| Error::UnknownAction {
                name: name.to_string(),
                line: i + 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSequence::new(video_id, labels, LabelSource::GroundTruth))
}

pub fn format_labels(labels: &[usize], vocab: &ActionVocabulary) -> String {
    let mut s = String::new();
    for &l in labels {
        s.push_str(&vocab.actions()[l]);
        s.push('\n');
    }
    s
}

fn parse_index_name(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, name) = line.split_once(char::is_whitespace).ok_or_else(|| Error::MalformedFile {
            path: path.to_path_buf(),
            reason: format!("line {} is not '<index> <name>'", i + 1),
        })?;
        let idx: usize = idx.parse().map_err(|_| Error::MalformedFile {
            path: path.to_path_buf(),
            reason: format!("line {}: bad index {idx:?}", i + 1),
        })?;
        entries.insert(idx, name.trim().to_string());
    }
    let names: Vec<String> = entries.values().cloned().collect();
    if entries.keys().copied().ne(0..names.len()) {
        return Err(Error::MalformedFile {
            path: path.to_path_buf(),
            reason: "indices are not contiguous from 0".into(),
        });
    }
    Ok(names)
}

fn format_index_name(names: &[String]) -> String {
    names.iter().enumerate().map(|(i, n)| format!("{i} {n}\n")).collect()
}

pub fn load_mapping(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_index_name(&text, path)
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn write_id_list<'a>(path: &Path, ids: impl IntoIterator<Item = &'a String>) -> Result<()> {
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn write_split(dir: &Path, split: &DatasetSplit, test_ids: &BTreeSet<String>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_id_list(&dir.join("labeled.txt"), &split.labeled_ids)?;
    write_id_list(&dir.join("unlabeled.txt"), &split.unlabeled_ids)?;
    write_id_list(&dir.join("test.txt"), test_ids)
}

/// Labeled and unlabeled id files from a split directory, if present.
pub fn read_split(dir: &Path, seed: u64) -> Result<DatasetSplit> {
    let labeled: BTreeSet<String> = read_id_list(&dir.join("labeled.txt"))?.into_iter().collect();
    let unlabeled: BTreeSet<String> = read_id_list(&dir.join("unlabeled.txt"))?.into_iter().collect();
    if let Some(id) = labeled.intersection(&unlabeled).next() {
        return Err(Error::BadSpec(format!("video {id} is both labeled and unlabeled")));
    }
    Ok(DatasetSplit {
        labeled_ids: labeled,
        unlabeled_ids: unlabeled,
        seed,
    })
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(dir: &Path, dataset: &Dataset, split: &DatasetSplit) -> Result<()> {
    let vocab = &dataset.vocab;
    write_atomic(&dir.join("mapping.txt"), format_index_name(vocab.actions()).as_bytes())?;
    if vocab.num_activities() > 0 {
        write_atomic(&dir.join("activities.txt"), format_index_name(vocab.activities()).as_bytes())?;
        let mut s = String::new();
        for f in &dataset.features {
            if let Some(c) = f.activity {
                s.push_str(&format!("{} {}\n", f.video_id, vocab.activities()[c]));
            }
        }
        write_atomic(&dir.join("video_activity.txt"), s.as_bytes())?;
    }
    for (f, l) in dataset.features.iter().zip(&dataset.labels) {
        save_feature_sequence(&dir.join("features").join(format!("{}.feat", f.video_id)), f)?;
        write_atomic(
            &dir.join("groundTruth").join(format!("{}.txt", l.video_id)),
            format_labels(&l.labels, vocab).as_bytes(),
        )?;
    }
    write_split(&dir.join("splits"), split, &dataset.test_ids)
}

/// Load every video listed in the split files under `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let actions = load_mapping(&dir.join("mapping.txt"))?;
    let activities_path = dir.join("activities.txt");
    let activities = if activities_path.exists() {
        load_mapping(&activities_path)?
    } else {
        Vec::new()
    };
    let vocab = ActionVocabulary::new(actions, activities)?;

    let mut video_activity = BTreeMap::new();
    let va_path = dir.join("video_activity.txt");
    if va_path.exists() {
        let text = fs::read_to_string(&va_path).map_err(|e| Error::io(&va_path, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (id, name) = line.trim().split_once(char::is_whitespace).ok_or_else(|| Error::MalformedFile {
                path: va_path.clone(),
                reason: format!("bad line {line:?}"),
            })?;
            let c = vocab
                .activity_index(name.trim())
                .ok_or_else(|| Error::BadSpec(format!("unknown activity {name:?}")))?;
            video_activity.insert(id.to_string(), c);
        }
    }

    let splits = dir.join("splits");
    let mut ids = Vec::new();
    for role in ["labeled.txt", "unlabeled.txt", "test.txt"] {
        let p = splits.join(role);
        if p.exists() {
            ids.extend(read_id_list(&p)?);
        }
    }
    let test_path = splits.join("test.txt");
    let test_ids: BTreeSet<String> = if test_path.exists() {
        read_id_list(&test_path)?.into_iter().collect()
    } else {
        BTreeSet::new()
    };
    let mut seen = BTreeSet::new();
    ids.retain(|id| seen.insert(id.clone()));
    ids.sort();

    let mut features = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for id in &ids {
        let f = load_feature_sequence(
            &dir.join("features").join(format!("{id}.feat")),
            id,
            video_activity.get(id).copied(),
        )?;
        let l = load_labels(&dir.join("groundTruth").join(format!("{id}.txt")), &vocab)?;
        features.push(f);
        labels.push(l);
    }
    Dataset::new(vocab, features, labels, test_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn vocab() -> ActionVocabulary {
        ActionVocabulary::new(vec!["pour".into(), "stir".into()], vec![]).unwrap()
    }

    #[test]
    fn feature_shape_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.feat");
        let data = Array2::from_shape_vec((4, 2), (0..8).map(|x| x as f32).collect()).unwrap();
        save_feature_sequence(&p, &FeatureSequence::new("v", data.clone(), None).unwrap()).unwrap();
        let back = load_feature_sequence(&p, "v", None).unwrap();
        assert_eq!(back.data.dim(), (4, 2));
        assert_eq!(back.data, data);
    }

    #[test]
    fn truncated_payload_is_malformed() {
        let mut bytes = encode_features(&array![[1.0f32, 2.0], [3.0, 4.0]]);
        bytes.pop();
        let err = decode_features(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { .. }));
    }

    #[test]
    fn nan_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.feat");
        fs::write(&p, encode_features(&array![[1.0f32], [f32::NAN]])).unwrap();
        assert!(matches!(
            load_feature_sequence(&p, "v", None),
            Err(Error::NonFiniteData { .. })
        ));
    }

    #[test]
    fn labels_map_through_vocab() {
        let l = parse_labels("pour\npour\nstir\n", "v", &vocab()).unwrap();
        assert_eq!(l.labels, vec![0, 0, 1]);
        assert_eq!(l.source, LabelSource::GroundTruth);
        let err = parse_labels("pour\nfly\n", "v", &vocab()).unwrap_err();
        assert!(matches!(err, Error::UnknownAction { ref name, line: 2 } if name == "fly"));
        assert!(parse_labels("", "v", &vocab()).unwrap().is_empty());
    }

    #[test]
    fn mapping_parses_index_name_lines() {
        let names = parse_index_name("1 stir\n0 pour\n", Path::new("m")).unwrap();
        assert_eq!(names, vec!["pour", "stir"]);
        assert!(parse_index_name("0 a\n2 b\n", Path::new("m")).is_err());
    }
}
