//! Run configuration: training hyper-parameters, sampling sizes, and
//! inference settings, with `key=value` round-tripping so a checkpoint
//! carries the exact configuration that produced it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, WsraError};
use crate::losses::{BetaPairing, LossWeights};
use crate::sampling::SamplingConfig;

/// How candidate spans are generated at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProposalMode {
    /// All contiguous runs over a fixed number of equal segments.
    Segment,
    /// Multi-scale sliding windows over the video duration.
    #[default]
    Sliding,
}

impl FromStr for ProposalMode {
    type Err = WsraError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(ProposalMode::Segment),
            "sliding" => Ok(ProposalMode::Sliding),
            other => Err(WsraError::Config(format!("unknown proposal mode '{}'", other))),
        }
    }
}

impl fmt::Display for ProposalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalMode::Segment => "segment",
            ProposalMode::Sliding => "sliding",
        })
    }
}

/// Which scoring head ranks proposals at inference time. The video head
/// is the default: prediction follows the attention weights, which are
/// softmaxed video-head scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InferenceHead {
    #[default]
    Video,
    Snippet,
}

impl FromStr for InferenceHead {
    type Err = WsraError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "video" => Ok(InferenceHead::Video),
            "snippet" => Ok(InferenceHead::Snippet),
            other => Err(WsraError::Config(format!("unknown inference head '{}'", other))),
        }
    }
}

impl fmt::Display for InferenceHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceHead::Video => "video",
            InferenceHead::Snippet => "snippet",
        })
    }
}

impl fmt::Display for BetaPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaPairing::Printed => "printed",
            BetaPairing::Swapped => "swapped",
        })
    }
}

/// Everything a run needs beyond the dataset itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha_w: f64,
    pub beta_w: f64,
    pub delta_w: f64,
    pub margin: f64,
    pub tau: f64,
    pub beta_pairing: BetaPairing,

    pub batch_size: usize,
    pub k_top: usize,
    pub k_last: usize,

    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub seed: u64,

    pub proposal_mode: ProposalMode,
    pub window_fractions: Vec<f64>,
    pub window_overlap: f64,
    pub inference_head: InferenceHead,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha_w: 0.1,
            beta_w: 1.0,
            delta_w: 0.1,
            margin: 0.4,
            tau: 1.0,
            beta_pairing: BetaPairing::Printed,
            batch_size: 42,
            k_top: 3,
            k_last: 3,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 30,
            seed: 7,
            proposal_mode: ProposalMode::Sliding,
            window_fractions: vec![0.2, 0.3, 0.4, 0.5],
            window_overlap: 0.8,
            inference_head: InferenceHead::Video,
            top_k: 5,
        }
    }
}

impl RunConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha_w: self.alpha_w,
            beta_w: self.beta_w,
            delta_w: self.delta_w,
            margin: self.margin,
            tau: self.tau,
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig { k_top: self.k_top, k_last: self.k_last, batch_size: self.batch_size }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        self.sampling().validate()?;
        if self.learning_rate <= 0.0 {
            return Err(WsraError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(WsraError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.adam_epsilon <= 0.0 {
            return Err(WsraError::Config("Adam epsilon must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(WsraError::Config("epochs must be positive".into()));
        }
        if self.window_fractions.is_empty() {
            return Err(WsraError::Config("need at least one window fraction".into()));
        }
        for &f in &self.window_fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(WsraError::Config(format!("window fraction {} outside (0, 1]", f)));
            }
        }
        if !(0.0..1.0).contains(&self.window_overlap) {
            return Err(WsraError::Config(format!(
                "window overlap {} outside [0, 1)",
                self.window_overlap
            )));
        }
        if self.top_k == 0 {
            return Err(WsraError::Config("top_k must be positive".into()));
        }
        Ok(())
    }

    /// Stable key=value listing; the inverse of [`RunConfig::set`].
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let fractions = self
            .window_fractions
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("alpha_w".into(), self.alpha_w.to_string()),
            ("beta_w".into(), self.beta_w.to_string()),
            ("delta_w".into(), self.delta_w.to_string()),
            ("margin".into(), self.margin.to_string()),
            ("tau".into(), self.tau.to_string()),
            ("beta_pairing".into(), self.beta_pairing.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("k_top".into(), self.k_top.to_string()),
            ("k_last".into(), self.k_last.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("adam_beta1".into(), self.adam_beta1.to_string()),
            ("adam_beta2".into(), self.adam_beta2.to_string()),
            ("adam_epsilon".into(), self.adam_epsilon.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("proposal_mode".into(), self.proposal_mode.to_string()),
            ("window_fractions".into(), fractions),
            ("window_overlap".into(), self.window_overlap.to_string()),
            ("inference_head".into(), self.inference_head.to_string()),
            ("top_k".into(), self.top_k.to_string()),
        ]
    }

    /// Apply one key=value override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn fmt::Display| {
            WsraError::Config(format!("bad value '{}' for {}: {}", value, key, e))
        };
        match key {
            "alpha_w" => self.alpha_w = value.parse().map_err(|e| bad(&e))?,
            "beta_w" => self.beta_w = value.parse().map_err(|e| bad(&e))?,
            "delta_w" => self.delta_w = value.parse().map_err(|e| bad(&e))?,
            "margin" => self.margin = value.parse().map_err(|e| bad(&e))?,
            "tau" => self.tau = value.parse().map_err(|e| bad(&e))?,
            "beta_pairing" => self.beta_pairing = value.parse()?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| bad(&e))?,
            "k_top" => self.k_top = value.parse().map_err(|e| bad(&e))?,
            "k_last" => self.k_last = value.parse().map_err(|e| bad(&e))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "adam_beta1" => self.adam_beta1 = value.parse().map_err(|e| bad(&e))?,
            "adam_beta2" => self.adam_beta2 = value.parse().map_err(|e| bad(&e))?,
            "adam_epsilon" => self.adam_epsilon = value.parse().map_err(|e| bad(&e))?,
            "epochs" => self.epochs = value.parse().map_err(|e| bad(&e))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "proposal_mode" => self.proposal_mode = value.parse()?,
            "window_fractions" => {
                self.window_fractions = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|e| bad(&e)))
                    .collect::<Result<_>>()?
            }
            "window_overlap" => self.window_overlap = value.parse().map_err(|e| bad(&e))?,
            "inference_head" => self.inference_head = value.parse()?,
            "top_k" => self.top_k = value.parse().map_err(|e| bad(&e))?,
            other => return Err(WsraError::Config(format!("unknown config key '{}'", other))),
        }
        Ok(())
    }

    /// Parse a config file of key=value lines over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                WsraError::Config(format!("line {}: expected key=value, got '{}'", lineno + 1, line))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
