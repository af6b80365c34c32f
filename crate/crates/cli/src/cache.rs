//! Content-addressed MFCC cache. A clip's key is the SHA-256 of the feature
//! configuration and the raw bytes of its audio file.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{Context, Result};
use coughnet::audio::{canonicalize, decode_wav, AudioClip};
use coughnet::features::{
    read_feature_file, write_feature_file, FeatureConfig, FeatureError, FeatureExtractor, FeatureMatrix,
};
use sha2::{Digest, Sha256};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Decode WAV bytes, resample to the canonical rate and pad or trim.
pub fn decode_canonical(bytes: &[u8], config: &FeatureConfig) -> Result<AudioClip> {
    let clip = decode_wav(Cursor::new(bytes))?;
    Ok(canonicalize(&clip, config.clip_samples))
}

pub struct FeatureCache {
    dir: PathBuf,
    config_json: String,
    extractor: FeatureExtractor,
    pub computed: usize,
    pub reused: usize,
}

impl FeatureCache {
    pub fn new(dir: &Path, config: FeatureConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_json: serde_json::to_string(&config)?,
            extractor: FeatureExtractor::new(config)?,
            computed: 0,
            reused: 0,
        })
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn key(&self, audio_bytes: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(self.config_json.as_bytes());
        h.update([0u8]);
        h.update(audio_bytes);
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.cmfc"))
    }

    fn lookup(&mut self, path: &Path) -> Option<FeatureMatrix> {
        let f = fs::File::open(path).ok()?;
        let m = read_feature_file(BufReader::new(f)).ok()?;
        self.reused += 1;
        Some(m)
    }

    fn store(&mut self, key: &str, m: &FeatureMatrix) -> Result<PathBuf, FeatureError> {
        let path = self.path_for(key);
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        let mut buf = Vec::new();
        write_feature_file(&mut buf, m)?;
        fs::write(&tmp, &buf)?;
        fs::rename(&tmp, &path)?;
        self.computed += 1;
        Ok(path)
    }

    /// Features of an encoded file, decoding only on a cache miss.
    pub fn features(&mut self, audio_bytes: &[u8], id: &str) -> Result<(FeatureMatrix, PathBuf)> {
        let key = self.key(audio_bytes);
        let path = self.path_for(&key);
        if let Some(m) = self.lookup(&path) {
            return Ok((m, path));
        }
        let clip = decode_canonical(audio_bytes, self.extractor.config())?;
        let m = self.extractor.mfcc(&clip, id)?;
        let path = self.store(&key, &m)?;
        Ok((m, path))
    }

    /// Features under a precomputed key for an already decoded clip.
    pub fn features_for_key(&mut self, key: &str, clip: &AudioClip, id: &str) -> Result<FeatureMatrix, FeatureError> {
        if let Some(m) = self.lookup(&self.path_for(key)) {
            return Ok(m);
        }
        let m = self.extractor.mfcc(clip, id)?;
        self.store(key, &m)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coughnet::audio::{write_wav, WavEncoding};

    fn wav(seconds: f64, freq: f64) -> Vec<u8> {
        let n = (seconds * 22050.0) as usize;
        let samples = (0..n).map(|t| (t as f64 * freq * std::f64::consts::TAU / 22050.0).sin() * 0.3).collect();
        let mut cur = Cursor::new(Vec::new());
        write_wav(&mut cur, &AudioClip::new(samples, 22050), WavEncoding::Pcm16).unwrap();
        cur.into_inner()
    }

    #[test]
    fn hit_after_miss_and_key_depends_on_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FeatureConfig::with_clip_seconds(1.0);
        let mut c = FeatureCache::new(dir.path(), cfg.clone()).unwrap();
        let bytes = wav(0.5, 440.0);
        let (a, pa) = c.features(&bytes, "a").unwrap();
        let (b, pb) = c.features(&bytes, "a").unwrap();
        assert_eq!((c.computed, c.reused), (1, 1));
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_eq!(a.n_frames, cfg.n_frames());

        let other = FeatureCache::new(dir.path(), FeatureConfig { n_mfcc: 13, ..cfg }).unwrap();
        assert_ne!(other.key(&bytes), c.key(&bytes));
        assert_ne!(c.key(&bytes), c.key(&wav(0.5, 441.0)));
    }
}
