//! Paired two-modality datasets, the line-delimited embedding file format,
//! cross-validation folds and batching.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub id: String,
    pub label: usize,
    pub e_a: Vec<f64>,
    pub e_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PairedSample>,
    pub d1: usize,
    pub d2: usize,
    pub classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        samples: Vec<PairedSample>,
        d1: usize,
        d2: usize,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("empty dataset".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            check_record(s, i + 1, d1, d2, classes)?;
        }
        Ok(Dataset {
            samples,
            d1,
            d2,
            classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn audio(&self, indices: &[usize]) -> Tensor {
        gather(indices, self.d1, |i| &self.samples[i].e_a)
    }

    pub fn text(&self, indices: &[usize]) -> Tensor {
        gather(indices, self.d2, |i| &self.samples[i].e_t)
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Classes in `[0, C)` with no samples.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn gather<'a>(indices: &[usize], width: usize, row: impl Fn(usize) -> &'a Vec<f64>) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        data.extend_from_slice(row(i));
    }
    Tensor::new(vec![indices.len(), width], data).expect("homogeneous rows")
}

fn check_record(
    s: &PairedSample,
    record: usize,
    d1: usize,
    d2: usize,
    classes: usize,
) -> Result<()> {
    let schema = |message: String| Err(Error::Schema { record, message });
    if s.e_a.len() != d1 {
        return schema(format!(
            "e_a has {} values, expected d1 = {d1}",
            s.e_a.len()
        ));
    }
    if s.e_t.len() != d2 {
        return schema(format!(
            "e_t has {} values, expected d2 = {d2}",
            s.e_t.len()
        ));
    }
    if s.label >= classes {
        return schema(format!("label {} out of range for C = {classes}", s.label));
    }
    if s.e_a.iter().chain(&s.e_t).any(|v| !v.is_finite()) {
        return schema("non-finite embedding value".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub latent_dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// Four classes, 2 000 samples, 32-dimensional modalities.
    fn default() -> Self {
        SyntheticConfig {
            classes: 4,
            samples_per_class: 500,
            latent_dim: 8,
            d1: 32,
            d2: 32,
            noise: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1
            || self.samples_per_class < 1
            || self.latent_dim < 1
            || self.d1 < 1
            || self.d2 < 1
        {
            return Err(Error::Parameter(format!(
                "synthetic counts and dims must be >= 1: {self:?}"
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise must be finite and >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut RngState, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.normal()).collect())
        .collect()
}

fn apply(map: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    map.iter()
        .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Class prototypes `z_c ~ N(0, I_k)` observed through fixed random maps
/// `M_a`, `M_t` (entries `N(0, 1/k)`) plus independent isotropic noise:
/// `e_a = M_a·z_c + σ·ε`, `e_t = M_t·z_c + σ·ε'`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let root = RngState::new(cfg.seed, "synthetic");
    let k = cfg.latent_dim;
    let map_scale = 1.0 / (k as f64).sqrt();
    let prototypes = gaussian_matrix(&mut root.fork("prototypes"), cfg.classes, k, 1.0);
    let m_a = gaussian_matrix(&mut root.fork("map-audio"), cfg.d1, k, map_scale);
    let m_t = gaussian_matrix(&mut root.fork("map-text"), cfg.d2, k, map_scale);
    let mut noise_a = root.fork("noise-audio");
    let mut noise_t = root.fork("noise-text");

    let centers: Vec<(Vec<f64>, Vec<f64>)> = prototypes
        .iter()
        .map(|z| (apply(&m_a, z), apply(&m_t, z)))
        .collect();
    let total = cfg.classes * cfg.samples_per_class;
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        // Round-robin over classes so that any prefix is near-balanced.
        let label = i % cfg.classes;
        let (ca, ct) = &centers[label];
        let e_a = ca
            .iter()
            .map(|c| c + cfg.noise * noise_a.normal())
            .collect();
        let e_t = ct
            .iter()
            .map(|c| c + cfg.noise * noise_t.normal())
            .collect();
        samples.push(PairedSample {
            id: format!("syn-{i:05}"),
            label,
            e_a,
            e_t,
        });
    }
    Dataset::new(samples, cfg.d1, cfg.d2, cfg.classes, Provenance::Synthetic)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d1: usize,
    d2: usize,
    #[serde(rename = "C")]
    classes: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Writes the header line followed by one JSON object per sample.
pub fn save_pairs(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        d1: ds.d1,
        d2: ds.d2,
        classes: ds.classes,
        count: ds.len(),
        provenance: Some(ds.provenance),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in &ds.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (line_no, first) = match lines.next() {
        None => return Err(Error::Contract("empty dataset".into())),
        Some((n, l)) => (n, l?),
    };
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: line_no,
        message: format!("bad header: {e}"),
    })?;
    let mut samples = Vec::with_capacity(header.count);
    for (line, text) in lines {
        let text = text?;
        let s: PairedSample = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        check_record(&s, samples.len() + 1, header.d1, header.d2, header.classes)?;
        samples.push(s);
    }
    if samples.is_empty() {
        return Err(Error::Contract("empty dataset".into()));
    }
    if samples.len() != header.count {
        return Err(Error::Schema {
            record: samples.len(),
            message: format!(
                "header declares {} records, found {}",
                header.count,
                samples.len()
            ),
        });
    }
    Dataset::new(
        samples,
        header.d1,
        header.d2,
        header.classes,
        header.provenance.unwrap_or(Provenance::Imported),
    )
}

/// Index lists of one train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Split>,
}

/// Shuffles `0..n` and cuts it into `k` near-equal chunks. Fold `f` tests on
/// chunk `f`, validates on chunk `f+1 mod k` and trains on the rest.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 3 {
        return Err(Error::Contract(format!("need k >= 3 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Contract(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed, "folds").shuffle(&mut order);
    let (base, extra) = (n / k, n % k);
    let mut chunks = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        chunks.push(order[start..start + len].to_vec());
        start += len;
    }
    let folds = (0..k)
        .map(|f| {
            let v = (f + 1) % k;
            let train = (0..k)
                .filter(|&c| c != f && c != v)
                .flat_map(|c| chunks[c].iter().copied())
                .collect();
            Split {
                train,
                validation: chunks[v].clone(),
                test: chunks[f].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { k, folds })
}

/// One shuffled train/validation/test split by fractions; the test set gets
/// the remainder.
pub fn fixed_split(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Parameter(format!(
            "fractions must be positive with train + val < 1, got {train_frac}, {val_frac}"
        )));
    }
    let n_train = (n as f64 * train_frac).round() as usize;
    let n_val = (n as f64 * val_frac).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Contract(format!(
            "{n} samples are too few for fractions {train_frac}, {val_frac}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed, "fixed-split").shuffle(&mut order);
    Ok(Split {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

/// Cuts `indices` into batches of `size`, optionally shuffled first. With
/// `drop_last` a trailing partial batch is discarded.
pub fn batch_iter(
    indices: &[usize],
    size: usize,
    shuffle: Option<&mut RngState>,
    drop_last: bool,
) -> Result<Vec<Vec<usize>>> {
    if size == 0 {
        return Err(Error::Contract("batch size must be >= 1".into()));
    }
    let mut order = indices.to_vec();
    if let Some(rng) = shuffle {
        rng.shuffle(&mut order);
    }
    Ok(order
        .chunks(size)
        .filter(|c| !drop_last || c.len() == size)
        .map(<[usize]>::to_vec)
        .collect())
}
