//! Dataset manifest, feature pipeline and padded batching.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctc::Vocabulary;
use crate::error::{Error, Result};
use crate::frontend::{load_wav, log_mel, spec_augment, spec_cutout, speed_perturb, AugmentSpec};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// One line of a JSON-lines dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_filepath: String,
    pub text: String,
    pub duration: f64,
}

/// Read a JSON-lines manifest; paths stay relative to the manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.as_ref().display())))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("manifest line {}: {e}", i + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Padded features and encoded targets for one training step.
#[derive(Debug, Clone)]
pub struct Batch {
    pub batch: usize,
    pub mels: usize,
    pub t_max: usize,
    /// `[B, F, T_max]` row-major, zero padded.
    pub features: Vec<f64>,
    pub feat_lengths: Vec<usize>,
    pub targets: Vec<Vec<usize>>,
    pub utt_ids: Vec<String>,
}

impl Batch {
    pub fn to_tensor<E: Element>(&self) -> Result<Tensor<E>> {
        Tensor::from_vec(
            &[self.batch, self.mels, self.t_max],
            self.features.iter().map(|&v| E::from_f64(v)).collect(),
        )
    }
}

/// Loads audio, applies per-epoch augmentation, and assembles batches.
///
/// Utterances are bucketed by duration (ascending) so batch-mates have
/// similar lengths; the order of the resulting batches is a seeded
/// permutation that changes per epoch. Pre-mask features are cached per
/// (utterance, speed factor) since the factor set is tiny.
#[derive(Debug)]
pub struct DataPipeline {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
    vocab: Vocabulary,
    batch_size: usize,
    seed: u64,
    augment: AugmentSpec,
    feature_cache: HashMap<(usize, u64), crate::frontend::FeatureMatrix>,
}

impl DataPipeline {
    pub fn new(
        entries: Vec<ManifestEntry>,
        base_dir: impl Into<PathBuf>,
        vocab: Vocabulary,
        batch_size: usize,
        seed: u64,
        augment: AugmentSpec,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        // Fail fast on unencodable transcripts.
        for e in &entries {
            Vocabulary::encode(&vocab, &e.text)
                .map_err(|err| Error::Data(format!("{}: {err}", e.audio_filepath)))?;
        }
        Ok(DataPipeline {
            entries,
            base_dir: base_dir.into(),
            vocab,
            batch_size,
            seed,
            augment,
            feature_cache: HashMap::new(),
        })
    }

    pub fn utterances(&self) -> usize {
        self.entries.len()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.entries.len().div_ceil(self.batch_size)
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn features_for(&mut self, idx: usize, epoch: usize) -> Result<crate::frontend::FeatureMatrix> {
        let factor = {
            let mut rng = Rng::derive(self.seed, "speed", (epoch as u64) << 32 | idx as u64);
            *rng.choose(&self.augment.speed_factors)
        };
        let key = (idx, factor.to_bits());
        if !self.feature_cache.contains_key(&key) {
            let clip = load_wav(self.resolve(&self.entries[idx].audio_filepath))
                .map_err(|e| Error::Data(format!("{}: {e}", self.entries[idx].audio_filepath)))?;
            let clip = speed_perturb(&clip, factor)?;
            let fm = log_mel(&clip)?;
            self.feature_cache.insert(key, fm);
        }
        let mut fm = self.feature_cache[&key].clone();

        if self.augment.freq_masks > 0 || self.augment.time_masks > 0 {
            let mut rng = Rng::derive(self.seed, "specaugment", (epoch as u64) << 32 | idx as u64);
            let spec = AugmentSpec {
                seed: rng.next_u64(),
                ..self.augment.clone()
            };
            fm = spec_augment(&fm, &spec);
        }
        if self.augment.cutout_rects > 0 {
            let mut rng = Rng::derive(self.seed, "speccutout", (epoch as u64) << 32 | idx as u64);
            let spec = AugmentSpec {
                seed: rng.next_u64(),
                ..self.augment.clone()
            };
            fm = spec_cutout(&fm, &spec);
        }
        Ok(fm)
    }

    /// Assemble the batches for one epoch.
    pub fn epoch_batches(&mut self, epoch: usize) -> Result<Vec<Batch>> {
        // Bucket by duration, then shuffle the bucket order per epoch.
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            self.entries[a]
                .duration
                .partial_cmp(&self.entries[b].duration)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut groups: Vec<Vec<usize>> = order
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect();
        let mut rng = Rng::derive(self.seed, "batch-order", epoch as u64);
        rng.shuffle(&mut groups);

        let mut batches = Vec::with_capacity(groups.len());
        for group in groups {
            let mut feats = Vec::with_capacity(group.len());
            for &idx in &group {
                feats.push(self.features_for(idx, epoch)?);
            }
            let mels = feats[0].mels;
            let t_max = feats.iter().map(|f| f.frames).max().unwrap();
            let mut features = vec![0.0; group.len() * mels * t_max];
            let mut feat_lengths = Vec::with_capacity(group.len());
            let mut targets = Vec::with_capacity(group.len());
            let mut utt_ids = Vec::with_capacity(group.len());
            for (b, (idx, fm)) in group.iter().zip(feats.iter()).enumerate() {
                for f in 0..mels {
                    for t in 0..fm.frames {
                        features[(b * mels + f) * t_max + t] = fm.value(f, t);
                    }
                }
                feat_lengths.push(fm.frames);
                targets.push(self.vocab.encode(&self.entries[*idx].text)?);
                utt_ids.push(self.entries[*idx].audio_filepath.clone());
            }
            batches.push(Batch {
                batch: group.len(),
                mels,
                t_max,
                features,
                feat_lengths,
                targets,
                utt_ids,
            });
        }
        Ok(batches)
    }
}
