use crate::audio_io::AudioClip;
use crate::error::Result;
use crate::features::{extract_features, FeatureVector};
use crate::preprocess::{preprocess_pipeline, FilterSpec, TrimConfig};
use crate::spectrogram::{compute_spectrogram, Spectrogram, StftConfig};

/// Preprocessing and analysis settings shared by featurization, training,
/// evaluation and classification.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignalPipeline {
    pub filter: FilterSpec,
    pub trim: TrimConfig,
    pub stft: StftConfig,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub processed: AudioClip,
    pub spectrogram: Spectrogram,
    pub features: FeatureVector,
}

impl SignalPipeline {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        self.filter.validate(sample_rate_hz)?;
        self.trim.frame_len(sample_rate_hz)?;
        self.stft.validate()
    }

    pub fn preprocess(&self, clip: &AudioClip) -> Result<AudioClip> {
        preprocess_pipeline(clip, &self.filter, &self.trim)
    }

    pub fn spectrogram(&self, clip: &AudioClip) -> Result<Spectrogram> {
        compute_spectrogram(&self.preprocess(clip)?, &self.stft)
    }

    pub fn features(&self, clip: &AudioClip) -> Result<FeatureVector> {
        extract_features(&self.preprocess(clip)?, &self.stft)
    }

    pub fn analyze(&self, clip: &AudioClip) -> Result<Analysis> {
        let processed = self.preprocess(clip)?;
        Ok(Analysis {
            spectrogram: compute_spectrogram(&processed, &self.stft)?,
            features: extract_features(&processed, &self.stft)?,
            processed,
        })
    }
}
