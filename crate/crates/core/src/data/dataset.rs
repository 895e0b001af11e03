use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Domain};
use crate::tensorcore::srtn::Tensor;
use crate::tensorcore::FeatureMap;
use crate::{Error, Result};

/// Parameters actually applied to one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub index: usize,
    pub seed: u64,
    pub s: f64,
    pub theta: f64,
    /// Net displacement in pixels, `[row, col]`.
    pub t: [f64; 2],
    /// Draws rejected because content would leave the canvas.
    pub redraws: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    /// Side of the canvas images were padded to, 0 if untouched.
    pub padding: usize,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub distortions: Vec<Distortion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<FeatureMap>,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(images: Vec<FeatureMap>, labels: Vec<usize>, meta: DatasetMeta) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|f| !f.same_shape(first)) {
                return Err(Error::shape(first.shape_string(), bad.shape_string()));
            }
        }
        Ok(Self {
            images,
            labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `1 + max label`.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let pick_meta = |d: &Vec<Distortion>| {
            if d.len() == self.len() {
                indices.iter().map(|&i| d[i]).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: DatasetMeta {
                distortions: pick_meta(&self.meta.distortions),
                ..self.meta.clone()
            },
        }
    }

    /// The first `n` items of a seeded shuffle (all items if `n ≥ len`).
    pub fn seeded_subset(&self, n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream(seed, Domain::Subset, 0));
        order.truncate(n.min(self.len()));
        self.select(&order)
    }

    /// Zero-pads every image to `size × size`, content centered.
    pub fn padded(&self, size: usize) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|f| f.pad_to(size, size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            labels: self.labels.clone(),
            meta: DatasetMeta {
                padding: size,
                ..self.meta.clone()
            },
        })
    }

    /// Writes `images.srtn` (`[N, C, H, W]`), `labels.srtn` (`[N]`) and
    /// `dataset.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (c, h, w) = self
            .images
            .first()
            .map_or((1, 0, 0), |f| (f.channels(), f.height(), f.width()));
        let mut data = Vec::with_capacity(self.len() * c * h * w);
        for f in &self.images {
            data.extend_from_slice(f.data());
        }
        Tensor::new(vec![self.len(), c, h, w], data)?.write(dir.join("images.srtn"))?;
        Tensor::new(
            vec![self.len()],
            self.labels.iter().map(|&l| l as f64).collect(),
        )?
        .write(dir.join("labels.srtn"))?;
        let json = serde_json::to_string_pretty(&self.meta)?;
        let path = dir.join("dataset.json");
        fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let images = Tensor::read(dir.join("images.srtn"))?;
        let labels = Tensor::read(dir.join("labels.srtn"))?;
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let [n, c, h, w] = images.dims[..] else {
            return Err(Error::Format(format!(
                "images tensor has dims {:?}",
                images.dims
            )));
        };
        let maps = images
            .data
            .chunks_exact((c * h * w).max(1))
            .take(n)
            .map(|chunk| FeatureMap::new(c, h, w, chunk.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let labels = labels
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Format(format!("label {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(maps, labels, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> LabeledDataset {
        let images = (0..n)
            .map(|i| FeatureMap::from_fn(4, 4, |[r, c]| i as f64 + r * 0.1 + c * 0.01).unwrap())
            .collect();
        LabeledDataset::new(
            images,
            (0..n).map(|i| i % 3).collect(),
            DatasetMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let ds = toy(3);
        let err = LabeledDataset::new(ds.images.clone(), vec![0, 1], DatasetMeta::default());
        assert!(matches!(
            err,
            Err(Error::CountMismatch {
                images: 3,
                labels: 2
            })
        ));
    }

    #[test]
    fn seeded_subsets_are_reproducible() {
        let ds = toy(50);
        let a = ds.seeded_subset(10, 4);
        assert_eq!(a, ds.seeded_subset(10, 4));
        assert_ne!(a.labels.iter().zip(&a.images).count(), 0);
        assert_ne!(a, ds.seeded_subset(10, 5));
        assert_eq!(ds.seeded_subset(500, 1).len(), 50);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(5).padded(8).unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(LabeledDataset::load(dir.path()).unwrap(), ds);
    }
}
