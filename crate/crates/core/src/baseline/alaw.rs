//! ITU-T G.711 A-law companding (A = 87.6, 8-bit codes).

const SCALE: f32 = 32768.0;

/// Encodes a 16-bit linear sample. Only the top 12 magnitude bits matter.
pub fn encode_i16(x: i16) -> u8 {
    let mut ix = if x < 0 { (!x) >> 4 } else { x >> 4 };
    if ix > 15 {
        let mut exp = 1;
        while ix > 16 + 15 {
            ix >>= 1;
            exp += 1;
        }
        ix -= 16;
        ix += exp << 4;
    }
    if x >= 0 {
        ix |= 0x80;
    }
    (ix as u8) ^ 0x55
}

/// Decodes to the midpoint of the code's quantization interval.
pub fn decode_i16(code: u8) -> i16 {
    let ix = (code ^ 0x55) & 0x7F;
    let exp = ix >> 4;
    let mut mant = (ix & 0x0F) as i16;
    if exp > 0 {
        mant += 16;
    }
    mant = (mant << 4) + 0x08;
    if exp > 1 {
        mant <<= exp - 1;
    }
    if code & 0x80 != 0 {
        mant
    } else {
        -mant
    }
}

/// Encodes a sample in [-1, 1]; values outside are clamped.
pub fn encode(sample: f32) -> u8 {
    let v = (sample.clamp(-1.0, 1.0) * SCALE).round().clamp(-32768.0, 32767.0) as i16;
    encode_i16(v)
}

pub fn decode(code: u8) -> f32 {
    decode_i16(code) as f32 / SCALE
}

/// Quantizes through the codec: `decode(encode(x))`.
pub fn quantize(samples: &[f32]) -> Vec<f32> {
    samples.iter().map(|&s| decode(encode(s))).collect()
}

/// MSB-first bit expansion of a code stream.
pub fn codes_to_bits(codes: &[u8]) -> Vec<u8> {
    codes
        .iter()
        .flat_map(|&c| (0..8).rev().map(move |i| (c >> i) & 1))
        .collect()
}

/// Inverse of [`codes_to_bits`]; a trailing partial byte is ignored.
pub fn bits_to_codes(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|b| b.iter().fold(0u8, |acc, &bit| (acc << 1) | (bit & 1)))
        .collect()
}
