//! `--config key=value` overrides, validated before any work starts.

use anyhow::{anyhow, bail, Context as _, Result};

use spoofnoise::features::{LpcConfig, MgdConfig};
use spoofnoise::mlp::TrainConfig;
use spoofnoise::noise::MixConfig;
use spoofnoise::StftConfig;

pub const KEYS: &[&str] = &[
    "stft.frame_len",
    "stft.hop",
    "stft.fft_len",
    "stft.bins",
    "lpc.order",
    "lpc.floor",
    "mgd.gamma",
    "mgd.alpha",
    "mgd.lifter",
    "train.learning_rate",
    "train.batch_size",
    "train.epochs",
    "train.hidden_dim",
    "train.frame_stride",
    "mix.clip_ceiling",
    "mix.threshold_db",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Overrides {
    pub stft: StftConfig,
    pub lpc: LpcConfig,
    pub mgd: MgdConfig,
    pub train: TrainConfig,
    /// Use every n-th frame of each training utterance.
    pub frame_stride: usize,
    pub mix: MixConfig,
}

impl Default for Overrides {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            lpc: LpcConfig::default(),
            mgd: MgdConfig::default(),
            train: TrainConfig::default(),
            frame_stride: 1,
            mix: MixConfig::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {v:?}: {e}"))
}

impl Overrides {
    pub fn parse(items: &[String]) -> Result<Self> {
        let mut o = Overrides::default();
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("--config expects key=value, got {item:?}"))?;
            o.set(k.trim(), v.trim())?;
        }
        o.validate()?;
        Ok(o)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "stft.frame_len" => self.stft.frame_len_samples = num(key, v)?,
            "stft.hop" => self.stft.hop_samples = num(key, v)?,
            "stft.fft_len" => self.stft.fft_len = num(key, v)?,
            "stft.bins" => self.stft.n_bins_kept = num(key, v)?,
            "lpc.order" => self.lpc.order = num(key, v)?,
            "lpc.floor" => self.lpc.floor_epsilon = num(key, v)?,
            "mgd.gamma" => self.mgd.gamma = num(key, v)?,
            "mgd.alpha" => self.mgd.alpha = num(key, v)?,
            "mgd.lifter" => {
                self.mgd.cepstral_lifter_order = match v {
                    "none" | "off" | "0" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "train.learning_rate" => self.train.learning_rate = num(key, v)?,
            "train.batch_size" => self.train.batch_size = num(key, v)?,
            "train.epochs" => self.train.epochs = num(key, v)?,
            "train.hidden_dim" => self.train.hidden_dim = num(key, v)?,
            "train.frame_stride" => self.frame_stride = num(key, v)?,
            "mix.clip_ceiling" => self.mix.clip_ceiling = num(key, v)?,
            "mix.threshold_db" => self.mix.activity.threshold_db = num(key, v)?,
            other => bail!("unknown config key {other:?}; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate().context("stft")?;
        self.lpc.validate(self.stft.frame_len_samples).context("lpc")?;
        self.mgd.validate(self.stft.fft_len).context("mgd")?;
        self.train.validate().context("train")?;
        if self.frame_stride == 0 {
            bail!("train.frame_stride must be at least 1");
        }
        self.mix.activity.validate().context("mix")?;
        if !(self.mix.clip_ceiling > 0.0 && self.mix.clip_ceiling <= 1.0) {
            bail!("mix.clip_ceiling must be in (0, 1], got {}", self.mix.clip_ceiling);
        }
        Ok(())
    }

    /// Training settings with the global seed applied.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let o = Overrides::parse(&[]).unwrap();
        assert_eq!(o, Overrides::default());
        let o = Overrides::parse(&s(&["train.epochs=3", "mgd.lifter=none", "stft.hop=80"])).unwrap();
        assert_eq!(o.train.epochs, 3);
        assert_eq!(o.mgd.cepstral_lifter_order, None);
        assert_eq!(o.stft.hop_samples, 80);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Overrides::parse(&s(&["train.epochs"])).is_err());
        assert!(Overrides::parse(&s(&["nope=1"])).is_err());
        assert!(Overrides::parse(&s(&["train.epochs=x"])).is_err());
        assert!(Overrides::parse(&s(&["train.epochs=0"])).is_err());
        assert!(Overrides::parse(&s(&["stft.bins=400"])).is_err());
        assert!(Overrides::parse(&s(&["lpc.order=500"])).is_err());
        assert!(Overrides::parse(&s(&["mix.clip_ceiling=1.5"])).is_err());
        assert!(Overrides::parse(&s(&["mgd.gamma=-1"])).is_err());
    }
}
