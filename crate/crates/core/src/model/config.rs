use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::prosody::{PauseCategory, DEFAULT_CONTEXT_SECONDS};

/// Which acoustic-prosodic blocks are appended to the word embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct FeatureFlags {
    pub pause: bool,
    pub duration: bool,
    pub cnn: bool,
}

impl FeatureFlags {
    pub const TEXT_ONLY: FeatureFlags = FeatureFlags {
        pause: false,
        duration: false,
        cnn: false,
    };
    pub const ALL: FeatureFlags = FeatureFlags {
        pause: true,
        duration: true,
        cnn: true,
    };

    pub fn any(self) -> bool {
        self.pause || self.duration || self.cnn
    }

    /// All eight combinations.
    pub fn combinations() -> impl Iterator<Item = FeatureFlags> {
        (0..8u8).map(|b| FeatureFlags {
            pause: b & 1 != 0,
            duration: b & 2 != 0,
            cnn: b & 4 != 0,
        })
    }
}

impl fmt::Display for FeatureFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.pause, "pause"), (self.duration, "duration"), (self.cnn, "cnn")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for FeatureFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut flags = FeatureFlags::TEXT_ONLY;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" | "text" => {}
                "pause" => flags.pause = true,
                "duration" => flags.duration = true,
                "cnn" => flags.cnn = true,
                other => return Err(config_err("features", alloc::format!("unknown feature `{other}`"))),
            }
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    /// Scores depend on encoder outputs and the decoder state only.
    Content,
    /// Scores also see convolutional features of the previous weights.
    Location,
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::Content => "content",
            AttentionKind::Location => "location",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(AttentionKind::Content),
            "location" => Ok(AttentionKind::Location),
            other => Err(config_err("attention", alloc::format!("unknown attention `{other}`"))),
        }
    }
}

/// Model hyperparameters. The default is the full-size configuration:
/// 3 × 256 LSTM layers, 512-dimensional embeddings, location-aware attention
/// with 5 filters of width 40, dropout 0.3, and no acoustic features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub word_embed_dim: usize,
    pub output_embed_dim: usize,
    pub pause_embed_dim: usize,
    pub cnn_filter_widths: Vec<usize>,
    pub cnn_filters_per_width: usize,
    pub location_filters: usize,
    pub location_width: usize,
    pub dropout: f64,
    pub features: FeatureFlags,
    pub attention: AttentionKind,
    /// Seconds of frames added on each side of a word for the CNN.
    pub context_seconds: f64,
    /// Half-width of the uniform parameter initialization.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            layers: 3,
            word_embed_dim: 512,
            output_embed_dim: 512,
            pause_embed_dim: 32,
            cnn_filter_widths: vec![10, 25, 50],
            cnn_filters_per_width: 16,
            location_filters: 5,
            location_width: 40,
            dropout: 0.3,
            features: FeatureFlags::TEXT_ONLY,
            attention: AttentionKind::Location,
            context_seconds: DEFAULT_CONTEXT_SECONDS,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Width of the encoder input `x_i`.
    pub fn input_width(&self) -> usize {
        let f = self.features;
        self.word_embed_dim
            + if f.pause { 2 * self.pause_embed_dim } else { 0 }
            + usize::from(f.duration)
            + if f.cnn { self.cnn_filter_widths.len() * self.cnn_filters_per_width } else { 0 }
    }

    /// Frame rows each word slice is padded to.
    pub fn min_frame_rows(&self) -> usize {
        if self.features.cnn {
            self.cnn_filter_widths.iter().copied().max().unwrap_or(1)
        } else {
            1
        }
    }

    pub fn with_features(mut self, features: FeatureFlags) -> Self {
        self.features = features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("word_embed_dim", self.word_embed_dim),
            ("output_embed_dim", self.output_embed_dim),
            ("pause_embed_dim", self.pause_embed_dim),
            ("cnn_filters_per_width", self.cnn_filters_per_width),
            ("location_filters", self.location_filters),
            ("location_width", self.location_width),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_err(field, "must be positive"));
            }
        }
        if self.features.cnn && (self.cnn_filter_widths.is_empty() || self.cnn_filter_widths.contains(&0)) {
            return Err(config_err("cnn_filter_widths", "need at least one positive width"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("dropout", "must be in [0, 1)"));
        }
        if !(self.context_seconds >= 0.0 && self.context_seconds.is_finite()) {
            return Err(config_err("context_seconds", "must be nonnegative"));
        }
        if !(self.init_scale > 0.0) {
            return Err(config_err("init_scale", "must be positive"));
        }
        Ok(())
    }

    /// Flat `key=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let widths: Vec<String> = self.cnn_filter_widths.iter().map(|w| w.to_string()).collect();
        alloc::format!(
            "hidden={}\nlayers={}\nword_embed_dim={}\noutput_embed_dim={}\npause_embed_dim={}\n\
             cnn_filter_widths={}\ncnn_filters_per_width={}\nlocation_filters={}\nlocation_width={}\n\
             dropout={}\nfeatures={}\nattention={}\ncontext_seconds={}\ninit_scale={}\n",
            self.hidden,
            self.layers,
            self.word_embed_dim,
            self.output_embed_dim,
            self.pause_embed_dim,
            widths.join(","),
            self.cnn_filters_per_width,
            self.location_filters,
            self.location_width,
            self.dropout,
            self.features,
            self.attention,
            self.context_seconds,
            self.init_scale,
        )
    }

    /// Overrides defaults with the recognized keys of `kv`; other keys are
    /// ignored so that one file can hold model and training settings.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<ModelConfig> {
        let mut c = ModelConfig::default();
        for (key, value) in kv {
            match key.as_str() {
                "hidden" => c.hidden = parse_field(key, value)?,
                "layers" => c.layers = parse_field(key, value)?,
                "word_embed_dim" => c.word_embed_dim = parse_field(key, value)?,
                "output_embed_dim" => c.output_embed_dim = parse_field(key, value)?,
                "pause_embed_dim" => c.pause_embed_dim = parse_field(key, value)?,
                "cnn_filter_widths" => {
                    c.cnn_filter_widths = value
                        .split(',')
                        .map(|w| parse_field(key, w.trim()))
                        .collect::<Result<_>>()?
                }
                "cnn_filters_per_width" => c.cnn_filters_per_width = parse_field(key, value)?,
                "location_filters" => c.location_filters = parse_field(key, value)?,
                "location_width" => c.location_width = parse_field(key, value)?,
                "dropout" => c.dropout = parse_field(key, value)?,
                "features" => c.features = value.parse()?,
                "attention" => c.attention = value.parse()?,
                "context_seconds" => c.context_seconds = parse_field(key, value)?,
                "init_scale" => c.init_scale = parse_field(key, value)?,
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Number of pause embedding rows.
pub const PAUSE_CATEGORIES: usize = PauseCategory::COUNT;

pub(crate) fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(key, alloc::format!("cannot parse `{value}`")))
}

/// Parses `key=value` lines; `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: alloc::format!("expected key=value, found `{line}`"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
