//! Classical telephony chain: G.711 A-law PCM, rate-1/3 turbo code with
//! SOVA decoding, Gray 64-QAM, over the shared channel simulator.

pub mod alaw;
pub mod qam;
pub mod turbo;

use std::io::Write;

use crate::channel::{self, ChannelSpec};
use crate::error::Result;
use crate::speech::SpeechClip;

pub use turbo::TurboCodec;

/// Result of pushing one clip through the chain.
#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub recovered: SpeechClip,
    /// Complex channel symbols spent on the clip.
    pub channel_symbols: usize,
    /// Payload bit errors after turbo decoding.
    pub bit_errors: usize,
    pub payload_bits: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Baseline {
    codec: TurboCodec,
}

impl Baseline {
    pub fn new(codec: TurboCodec) -> Self {
        Self { codec }
    }

    pub fn codec(&self) -> &TurboCodec {
        &self.codec
    }

    /// Payload bits split into zero-padded turbo blocks.
    pub fn source_blocks(&self, clip: &SpeechClip) -> Vec<Vec<u8>> {
        let codes: Vec<u8> = clip.samples.iter().map(|&s| alaw::encode(s)).collect();
        let bits = alaw::codes_to_bits(&codes);
        let k = self.codec.block_len;
        bits.chunks(k)
            .map(|c| {
                let mut b = c.to_vec();
                b.resize(k, 0);
                b
            })
            .collect()
    }

    /// Complex symbols used for a clip of `samples` samples.
    pub fn symbols_for(&self, samples: usize) -> usize {
        let blocks = (samples * 8).div_ceil(self.codec.block_len);
        (blocks * self.codec.codeword_len()).div_ceil(qam::BITS_PER_SYMBOL)
    }

    /// A-law encode, turbo encode per block, 64-QAM, channel, soft demap,
    /// SOVA decode, A-law decode. `stream` selects the channel RNG stream.
    pub fn transmit(&self, clip: &SpeechClip, spec: &ChannelSpec, stream: u64) -> Result<BaselineOutput> {
        let blocks = self.source_blocks(clip);
        let mut coded = Vec::with_capacity(blocks.len() * self.codec.codeword_len());
        for b in &blocks {
            coded.extend(self.codec.encode(b)?);
        }
        let (symbols, _pad) = qam::modulate(&coded);
        let (y, real) = channel::transmit(&symbols, 1, spec, stream)?;
        let llrs = qam::demodulate_soft(&y, &real)?;

        let n = self.codec.codeword_len();
        let mut decoded = Vec::with_capacity(blocks.len() * self.codec.block_len);
        for (i, block) in llrs[..blocks.len() * n].chunks_exact(n).enumerate() {
            let bits = self.codec.decode(block)?;
            debug_assert_eq!(bits.len(), blocks[i].len());
            decoded.extend(bits);
        }
        let payload_bits = clip.len() * 8;
        let sent: Vec<u8> = blocks.concat();
        let bit_errors = sent[..payload_bits]
            .iter()
            .zip(&decoded[..payload_bits])
            .filter(|(a, b)| a != b)
            .count();
        let codes = alaw::bits_to_codes(&decoded[..payload_bits]);
        let samples = codes.into_iter().map(alaw::decode).collect();
        Ok(BaselineOutput {
            recovered: SpeechClip::new(samples, clip.sample_rate_hz, clip.source_id.clone()),
            channel_symbols: symbols.len(),
            bit_errors,
            payload_bits,
        })
    }

    /// Writes the payload blocks as text, one block per line of 0/1.
    pub fn dump_blocks(&self, clip: &SpeechClip, mut out: impl Write) -> Result<()> {
        for block in self.source_blocks(clip) {
            let line: String = block.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
