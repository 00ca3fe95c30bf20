//! Tokenization strategies behind a common trait, selectable by name.
//!
//! | name         | behaviour                                               |
//! |--------------|---------------------------------------------------------|
//! | `rlt`        | run-length tokenization                                  |
//! | `standard`   | every tubelet, run length 1                              |
//! | `random`     | standard tokens, then uniform random masking             |
//! | `rlt+random` | run-length tokens, then uniform random masking           |

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Result, RltError};
use crate::rlt::{normalized_grid, random_mask, tokenize_with, TokenSequence, TokenizerSettings};
use crate::tensor::VideoTensor;

pub trait Tokenizer: Send + Sync {
    /// Registry key; also recorded in the output's settings.
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn tokenize(&self, video: &VideoTensor, settings: &TokenizerSettings) -> Result<TokenSequence>;
}

fn stamped(settings: &TokenizerSettings, name: &str) -> TokenizerSettings {
    let mut s = settings.clone();
    s.strategy = name.to_string();
    s
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RunLengthTokenizer;

impl Tokenizer for RunLengthTokenizer {
    fn name(&self) -> &'static str {
        "rlt"
    }

    fn description(&self) -> &'static str {
        "drop temporally static tubelets and attach run lengths"
    }

    fn tokenize(&self, video: &VideoTensor, settings: &TokenizerSettings) -> Result<TokenSequence> {
        let mut s = stamped(settings, self.name());
        s.mask_ratio = 0.0;
        tokenize_with(video, s)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StandardTokenizer;

impl Tokenizer for StandardTokenizer {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn description(&self) -> &'static str {
        "keep every tubelet (run length 1)"
    }

    fn tokenize(&self, video: &VideoTensor, settings: &TokenizerSettings) -> Result<TokenSequence> {
        let mut s = stamped(settings, self.name());
        s.mask_ratio = 0.0;
        let grid = normalized_grid(video, &s)?;
        Ok(TokenSequence::standard(&grid, s))
    }
}

/// Applies [`random_mask`] with the settings' ratio and seed on top of an
/// inner strategy.
pub struct RandomMaskTokenizer {
    name: &'static str,
    description: &'static str,
    inner: Arc<dyn Tokenizer>,
}

impl RandomMaskTokenizer {
    pub fn new(name: &'static str, description: &'static str, inner: Arc<dyn Tokenizer>) -> Self {
        Self {
            name,
            description,
            inner,
        }
    }
}

impl Tokenizer for RandomMaskTokenizer {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn tokenize(&self, video: &VideoTensor, settings: &TokenizerSettings) -> Result<TokenSequence> {
        let base = self.inner.tokenize(video, settings)?;
        let mut out = random_mask(&base, settings.mask_ratio, settings.seed)?;
        out.meta_mut().settings.strategy = self.name.to_string();
        Ok(out)
    }
}

#[derive(Clone, Default)]
pub struct TokenizerRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Tokenizer>>,
}

impl TokenizerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        let rlt: Arc<dyn Tokenizer> = Arc::new(RunLengthTokenizer);
        let standard: Arc<dyn Tokenizer> = Arc::new(StandardTokenizer);
        for t in [
            rlt.clone(),
            standard.clone(),
            Arc::new(RandomMaskTokenizer::new(
                "random",
                "keep every tubelet, then drop --mask-ratio of them uniformly",
                standard,
            )),
            Arc::new(RandomMaskTokenizer::new(
                "rlt+random",
                "run-length tokens, then drop --mask-ratio of them uniformly",
                rlt,
            )),
        ] {
            reg.register(t).expect("builtin names are unique");
        }
        reg
    }

    pub fn register(&mut self, tokenizer: Arc<dyn Tokenizer>) -> Result<()> {
        let name = tokenizer.name();
        if self.entries.contains_key(name) {
            return Err(RltError::usage(format!("tokenizer {name:?} is already registered")));
        }
        self.entries.insert(name, tokenizer);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Tokenizer>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            RltError::usage(format!(
                "unknown tokenizer {name:?} (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Tokenizer>> {
        self.entries.values()
    }

    /// Looks up `settings.strategy` and runs it.
    pub fn tokenize(&self, video: &VideoTensor, settings: &TokenizerSettings) -> Result<TokenSequence> {
        self.get(&settings.strategy)?.tokenize(video, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{NormalizationParams, TubeletConfig, VideoDims};

    fn settings() -> TokenizerSettings {
        TokenizerSettings {
            config: TubeletConfig::square(2, 1),
            norm: NormalizationParams::identity(1),
            ..TokenizerSettings::default()
        }
    }

    fn static_video() -> VideoTensor {
        VideoTensor::from_fn(VideoDims::new(1, 4, 4, 4), |_, _, h, w| (h * 4 + w) as f32 / 16.0).unwrap()
    }

    #[test]
    fn builtins_are_registered() {
        let reg = TokenizerRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["random", "rlt", "rlt+random", "standard"]);
        assert!(reg.get("nope").is_err());
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut reg = TokenizerRegistry::with_builtins();
        assert!(reg.register(Arc::new(RunLengthTokenizer)).is_err());
    }

    #[test]
    fn strategies_differ_on_static_video() {
        let reg = TokenizerRegistry::with_builtins();
        let v = static_video();
        let s = settings();
        let rlt = reg.get("rlt").unwrap().tokenize(&v, &s).unwrap();
        let std = reg.get("standard").unwrap().tokenize(&v, &s).unwrap();
        assert_eq!(rlt.len(), 4);
        assert_eq!(std.len(), 16);
        assert_eq!(rlt.settings().strategy, "rlt");
        assert_eq!(std.settings().strategy, "standard");
        assert!(std.tokens().iter().all(|t| t.run_length == 1));
    }

    #[test]
    fn random_strategy_drops_fixed_fraction() {
        let reg = TokenizerRegistry::with_builtins();
        let s = TokenizerSettings {
            strategy: "random".into(),
            mask_ratio: 0.5,
            seed: 3,
            ..settings()
        };
        let out = reg.tokenize(&static_video(), &s).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out.settings().strategy, "random");
        assert_eq!(out.settings().mask_ratio, 0.5);
    }
}
