use std::fmt::Write as _;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::ConvSpec;

/// How the last decoder channels are turned into masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskHead {
    /// Sigmoid magnitude mask plus tanh phase pair (3 channels).
    Polar,
    /// Unbounded complex mask pair (2 channels).
    Cartesian,
}

impl MaskHead {
    pub fn channels(self) -> usize {
        match self {
            MaskHead::Polar => 3,
            MaskHead::Cartesian => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskHead::Polar => "polar",
            MaskHead::Cartesian => "cartesian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    pub psm_hidden: Vec<usize>,
    pub kernel_f: usize,
    pub kernel_t: usize,
    pub stride_f: usize,
    pub input_channels: usize,
    pub head: MaskHead,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_channels(&[16, 32, 64, 128, 256], &[128, 64, 32])
    }
}

pub(crate) const MODEL_KEYS: [&str; 8] = [
    "enc_channels",
    "dec_channels",
    "psm_hidden",
    "kernel_f",
    "kernel_t",
    "stride_f",
    "input_channels",
    "head",
];

impl ModelConfig {
    /// Encoder channels as given; decoder mirrors them back down to the mask channels.
    pub fn with_channels(enc: &[usize], hidden: &[usize]) -> Self {
        let head = MaskHead::Polar;
        let mut dec: Vec<usize> = enc.iter().rev().skip(1).copied().collect();
        dec.push(head.channels());
        Self {
            enc_channels: enc.to_vec(),
            dec_channels: dec,
            psm_hidden: hidden.to_vec(),
            kernel_f: 5,
            kernel_t: 2,
            stride_f: 2,
            input_channels: 2,
            head,
        }
    }

    /// Small network used for quick training runs.
    pub fn toy() -> Self {
        Self::with_channels(&[4, 8, 8, 8, 8], &[8, 8, 8])
    }

    /// Same network with a different mask head; the last decoder width follows.
    pub fn with_head(mut self, head: MaskHead) -> Self {
        self.head = head;
        if let Some(last) = self.dec_channels.last_mut() {
            *last = head.channels();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.enc_channels.is_empty() {
            return Err(Error::invalid("at least one encoder block is required"));
        }
        if self.enc_channels.len() != self.dec_channels.len() {
            return Err(Error::invalid(format!(
                "{} encoder blocks but {} decoder blocks",
                self.enc_channels.len(),
                self.dec_channels.len()
            )));
        }
        if self.dec_channels.last() != Some(&self.head.channels()) {
            return Err(Error::invalid(format!(
                "last decoder block must output {} channels for the {} head",
                self.head.channels(),
                self.head.as_str()
            )));
        }
        let widths = self
            .enc_channels
            .iter()
            .chain(&self.dec_channels)
            .chain(&self.psm_hidden);
        if widths.copied().any(|c| c == 0) {
            return Err(Error::invalid("channel and hidden sizes must be positive"));
        }
        if self.kernel_f == 0 || self.kernel_f % 2 == 0 {
            return Err(Error::invalid("kernel_f must be odd"));
        }
        if self.kernel_t == 0 || self.stride_f == 0 || self.input_channels == 0 {
            return Err(Error::invalid("kernel_t, stride_f and input_channels must be positive"));
        }
        Ok(())
    }

    pub fn conv_spec(&self, in_ch: usize, out_ch: usize) -> ConvSpec {
        ConvSpec {
            in_ch,
            out_ch,
            kernel_f: self.kernel_f,
            kernel_t: self.kernel_t,
            stride_f: self.stride_f,
            pad_f: self.kernel_f / 2,
        }
    }

    /// Channels feeding the recurrent blocks.
    pub fn bottleneck(&self) -> usize {
        *self.enc_channels.last().unwrap_or(&self.input_channels)
    }

    /// Frequency sizes after each encoder block, starting with the input size.
    pub fn freq_chain(&self, bins: usize) -> Vec<usize> {
        let pad = self.kernel_f / 2;
        let mut chain = vec![bins];
        let mut f = bins;
        for _ in &self.enc_channels {
            f = (f + 2 * pad).saturating_sub(self.kernel_f) / self.stride_f + 1;
            chain.push(f);
        }
        chain
    }

    /// Canonical text form, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "enc_channels={}", list(&self.enc_channels));
        let _ = writeln!(s, "dec_channels={}", list(&self.dec_channels));
        let _ = writeln!(s, "psm_hidden={}", list(&self.psm_hidden));
        let _ = writeln!(s, "kernel_f={}", self.kernel_f);
        let _ = writeln!(s, "kernel_t={}", self.kernel_t);
        let _ = writeln!(s, "stride_f={}", self.stride_f);
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = writeln!(s, "head={}", self.head.as_str());
        s
    }

    /// Reads model keys, falling back to defaults for absent ones.
    ///
    /// When only `enc_channels` is given the decoder mirrors it.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let base = ModelConfig::default();
        let enc = kv.get_list("enc_channels")?.unwrap_or(base.enc_channels.clone());
        let hidden = kv.get_list("psm_hidden")?.unwrap_or(base.psm_hidden.clone());
        let head = match kv.raw("head") {
            None | Some("polar") => MaskHead::Polar,
            Some("cartesian") => MaskHead::Cartesian,
            Some(other) => {
                return Err(Error::Parse {
                    line: kv.line_of("head").unwrap_or(0),
                    msg: format!("unknown head {other:?}"),
                })
            }
        };
        let mut cfg = ModelConfig::with_channels(&enc, &hidden).with_head(head);
        if let Some(dec) = kv.get_list("dec_channels")? {
            cfg.dec_channels = dec;
        }
        cfg.kernel_f = kv.get("kernel_f")?.unwrap_or(base.kernel_f);
        cfg.kernel_t = kv.get("kernel_t")?.unwrap_or(base.kernel_t);
        cfg.stride_f = kv.get("stride_f")?.unwrap_or(base.stride_f);
        cfg.input_channels = kv.get("input_channels")?.unwrap_or(base.input_channels);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(&MODEL_KEYS.into_iter().collect())?;
        Self::from_key_values(&kv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        assert_eq!(c.dec_channels, vec![128, 64, 32, 16, 3]);
        assert_eq!(c.freq_chain(257), vec![257, 129, 65, 33, 17, 9]);
        c.validate().unwrap();
        assert_eq!(ModelConfig::toy().dec_channels, vec![8, 8, 8, 4, 3]);
    }

    #[test]
    fn text_round_trip() {
        for c in [
            ModelConfig::default(),
            ModelConfig::toy().with_head(MaskHead::Cartesian),
        ] {
            assert_eq!(ModelConfig::from_text(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::default();
        c.dec_channels[4] = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.dec_channels.pop();
        assert!(c.validate().is_err());
        assert!(matches!(
            ModelConfig::from_text("head=polar\nfoo=1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
