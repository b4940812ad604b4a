//! Text formats for interactions, features and index maps.
//!
//! - interactions: one `user_id<TAB>item_id` per line
//! - features: header `n_items d_m`, then `n_items` rows of `d_m` floats
//! - index map: one `external_id<TAB>dense_index` per line

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_features, InteractionData, ModalityFeatures, RawInteraction};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Splits a line into exactly two fields on a tab, or on whitespace when the
/// line has no tab.
fn two_fields(line: &str) -> Option<(&str, &str)> {
    let mut it: Box<dyn Iterator<Item = &str>> = if line.contains('\t') {
        Box::new(line.split('\t').map(str::trim))
    } else {
        Box::new(line.split_whitespace())
    };
    let a = it.next().filter(|s| !s.is_empty())?;
    let b = it.next().filter(|s| !s.is_empty())?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b))
}

/// Reads interactions in file order, dropping repeated pairs.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<Vec<RawInteraction>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (u, i) = two_fields(line)
            .ok_or_else(|| parse_err(path, n + 1, "expected `user_id<TAB>item_id`"))?;
        let pair = (u.to_string(), i.to_string());
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, 0, "no interactions in file"));
    }
    Ok(out)
}

pub fn write_interactions<'a>(
    path: impl AsRef<Path>,
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<()> {
    let mut s = String::new();
    for (u, i) in pairs {
        let _ = writeln!(s, "{u}\t{i}");
    }
    write(path.as_ref(), &s)
}

pub fn load_features(path: impl AsRef<Path>, name: &str) -> Result<ModalityFeatures> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing `n_items d_m` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, 1, "header must be `n_items d_m`"))?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(path, 1, "header must be `n_items d_m`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (n, line) in lines {
        if seen == rows {
            return Err(parse_err(path, n + 1, format!("more than {rows} rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, n + 1, format!("bad float {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(parse_err(
                path,
                n + 1,
                format!("expected {cols} values, got {}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(path, 0, format!("expected {rows} rows, got {seen}")));
    }
    ModalityFeatures::new(name, Matrix::from_vec(rows, cols, data))
}

pub fn write_features(path: impl AsRef<Path>, features: &Matrix) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", features.rows(), features.cols());
    for r in 0..features.rows() {
        let row = features.row(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                s.push(' ');
            }
            // `Display` for f64 is the shortest string that round-trips.
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    write(path.as_ref(), &s)
}

pub fn write_index_map(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let mut s = String::new();
    for (i, id) in ids.iter().enumerate() {
        let _ = writeln!(s, "{id}\t{i}");
    }
    write(path.as_ref(), &s)
}

/// Reads an index map and returns ids ordered by dense index. Indices must
/// cover `0..n` exactly once.
pub fn load_index_map(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut entries: Vec<Option<String>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, ix) =
            two_fields(line).ok_or_else(|| parse_err(path, n + 1, "expected `id<TAB>index`"))?;
        let ix: usize = ix
            .parse()
            .map_err(|_| parse_err(path, n + 1, format!("bad index {ix:?}")))?;
        if entries.len() <= ix {
            entries.resize(ix + 1, None);
        }
        if entries[ix].replace(id.to_string()).is_some() {
            return Err(parse_err(path, n + 1, format!("index {ix} assigned twice")));
        }
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or_else(|| parse_err(path, 0, format!("index {i} missing"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub file: String,
    pub dim: usize,
}

/// `manifest.json` of a prepared dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub modalities: Vec<FeatureEntry>,
    /// Generator settings when the dataset is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const USERS_MAP: &str = "users.map";
pub const ITEMS_MAP: &str = "items.map";
pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "val.tsv", "test.tsv"];

fn split_pairs<'a>(data: &'a InteractionData, lists: &'a [Vec<usize>]) -> impl Iterator<Item = (&'a str, &'a str)> {
    lists.iter().enumerate().flat_map(move |(u, items)| {
        items
            .iter()
            .map(move |&i| (data.user_ids[u].as_str(), data.item_ids[i].as_str()))
    })
}

/// Writes split files, index maps, feature files and the manifest into `dir`.
pub fn save_dataset(
    dir: impl AsRef<Path>,
    data: &InteractionData,
    features: &[ModalityFeatures],
    synth: Option<serde_json::Value>,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_index_map(dir.join(USERS_MAP), &data.user_ids)?;
    write_index_map(dir.join(ITEMS_MAP), &data.item_ids)?;
    for (file, lists) in SPLIT_FILES.iter().zip([&data.train, &data.val, &data.test]) {
        write_interactions(dir.join(file), split_pairs(data, lists))?;
    }
    let mut modalities = Vec::new();
    for f in features {
        let file = format!("{}.feat", f.name);
        write_features(dir.join(&file), &f.matrix)?;
        modalities.push(FeatureEntry {
            name: f.name.clone(),
            file,
            dim: f.dim(),
        });
    }
    let manifest = DatasetManifest {
        n_users: data.n_users,
        n_items: data.n_items,
        n_train: data.n_train(),
        n_val: data.val.iter().map(Vec::len).sum(),
        n_test: data.test.iter().map(Vec::len).sum(),
        modalities,
        synth,
    };
    let path = dir.join(MANIFEST_FILE);
    write(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(manifest)
}

/// Loads a directory written by [`save_dataset`].
pub fn load_dataset(
    dir: impl AsRef<Path>,
) -> Result<(InteractionData, Vec<ModalityFeatures>, DatasetManifest)> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = serde_json::from_str(&read(&dir.join(MANIFEST_FILE))?)?;
    let user_ids = load_index_map(dir.join(USERS_MAP))?;
    let item_ids = load_index_map(dir.join(ITEMS_MAP))?;
    let lookup = |ids: &[String]| -> std::collections::HashMap<String, usize> {
        ids.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect()
    };
    let users = lookup(&user_ids);
    let items = lookup(&item_ids);
    let mut lists: Vec<Vec<Vec<usize>>> = Vec::new();
    for file in SPLIT_FILES {
        let path: PathBuf = dir.join(file);
        let mut per_user = vec![Vec::new(); user_ids.len()];
        let text = read(&path)?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (u, i) = two_fields(line)
                .ok_or_else(|| parse_err(&path, n + 1, "expected `user_id<TAB>item_id`"))?;
            let u = *users
                .get(u)
                .ok_or_else(|| parse_err(&path, n + 1, format!("unknown user {u:?}")))?;
            let i = *items
                .get(i)
                .ok_or_else(|| parse_err(&path, n + 1, format!("unknown item {i:?}")))?;
            per_user[u].push(i);
        }
        lists.push(per_user);
    }
    let test = lists.pop().unwrap();
    let val = lists.pop().unwrap();
    let train = lists.pop().unwrap();
    let data = InteractionData::new(user_ids, item_ids, train, val, test)?;
    let mut features = Vec::new();
    for entry in &manifest.modalities {
        let f = load_features(dir.join(&entry.file), &entry.name)?;
        if f.dim() != entry.dim {
            return Err(Error::Shape {
                what: format!("features {:?}", entry.name),
                expected: format!("{} columns", entry.dim),
                got: format!("{} columns", f.dim()),
            });
        }
        features.push(f);
    }
    check_features(&data, &features)?;
    Ok((data, features, manifest))
}
