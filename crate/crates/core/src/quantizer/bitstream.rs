//! Bit-exact packing of quantizer indices.
//!
//! Layout (little-endian integers, little-endian bit order within bytes):
//!
//! ```text
//! magic "SGCS" | u16 version | u32 sample_rate | u32 frame_rate
//! | u16 n_codebooks | u32 codebook_size | u32 n_frames
//! | payload: n_frames * n_codebooks indices, frame-major then codebook
//!   order, ceil(log2(codebook_size)) bits each, zero-padded to a byte
//! ```

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SGCS";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2 + 4 + 4;

/// Compressed token stream: header plus per-frame indices across codebooks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeStream {
    pub sample_rate: u32,
    pub frame_rate: u32,
    pub n_codebooks: u16,
    pub codebook_size: u32,
    pub n_frames: u32,
    /// Frame-major then codebook order; `n_frames * n_codebooks` entries,
    /// each `< codebook_size`.
    pub indices: Vec<u32>,
}

impl CodeStream {
    pub fn bits_per_index(&self) -> u32 {
        32 - (self.codebook_size - 1).leading_zeros()
    }

    pub fn bits_per_frame(&self) -> u32 {
        self.bits_per_index() * self.n_codebooks as u32
    }

    /// `N_C * log2(codebook_size) * frame_rate`, in bits per second.
    pub fn bandwidth_bps(&self) -> f64 {
        self.n_codebooks as f64 * (self.codebook_size as f64).log2() * self.frame_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            return Err(Error::Format(format!(
                "codebook size {} below 2",
                self.codebook_size
            )));
        }
        if self.n_codebooks == 0 {
            return Err(Error::Format("zero codebooks".into()));
        }
        if self.indices.len() != self.n_frames as usize * self.n_codebooks as usize {
            return Err(Error::Format(format!(
                "{} indices for {} frames x {} codebooks",
                self.indices.len(),
                self.n_frames,
                self.n_codebooks
            )));
        }
        if let Some((i, &v)) = self
            .indices
            .iter()
            .enumerate()
            .find(|(_, &v)| v >= self.codebook_size)
        {
            return Err(Error::Format(format!(
                "index {v} at position {i} exceeds codebook size {}",
                self.codebook_size
            )));
        }
        Ok(())
    }

    pub fn pack(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let bits = self.bits_per_index() as usize;
        let total_bits = bits * self.indices.len();
        let mut out = Vec::with_capacity(HEADER_LEN + total_bits.div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.frame_rate.to_le_bytes());
        out.extend_from_slice(&self.n_codebooks.to_le_bytes());
        out.extend_from_slice(&self.codebook_size.to_le_bytes());
        out.extend_from_slice(&self.n_frames.to_le_bytes());
        out.resize(HEADER_LEN + total_bits.div_ceil(8), 0u8);
        let payload = &mut out[HEADER_LEN..];
        let mut bitpos = 0usize;
        for &idx in &self.indices {
            for b in 0..bits {
                if idx >> b & 1 == 1 {
                    payload[bitpos >> 3] |= 1 << (bitpos & 7);
                }
                bitpos += 1;
            }
        }
        Ok(out)
    }

    pub fn unpack(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "stream of {} bytes shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad stream magic {:02x?} at byte 0",
                &bytes[..4]
            )));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "stream version {version} not supported (expected {VERSION}) at byte 4"
            )));
        }
        let sample_rate = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let frame_rate = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let n_codebooks = u16::from_le_bytes(bytes[14..16].try_into().unwrap());
        let codebook_size = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let n_frames = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
        if codebook_size < 2 || n_codebooks == 0 {
            return Err(Error::Format(
                "stream header declares an empty quantizer".into(),
            ));
        }
        let n_indices = n_frames as usize * n_codebooks as usize;
        let bits = (32 - (codebook_size - 1).leading_zeros()) as usize;
        let want_payload = (bits * n_indices).div_ceil(8);
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != want_payload {
            return Err(Error::Format(format!(
                "declared length needs {want_payload} payload bytes, found {} (at byte {HEADER_LEN})",
                payload.len()
            )));
        }
        let mut indices = Vec::with_capacity(n_indices);
        let mut bitpos = 0usize;
        for i in 0..n_indices {
            let mut v = 0u32;
            for b in 0..bits {
                if payload[bitpos >> 3] >> (bitpos & 7) & 1 == 1 {
                    v |= 1 << b;
                }
                bitpos += 1;
            }
            if v >= codebook_size {
                return Err(Error::Format(format!(
                    "index {v} at position {i} (byte {}) exceeds codebook size {codebook_size}",
                    HEADER_LEN + (bitpos - bits) / 8
                )));
            }
            indices.push(v);
        }
        // Padding bits past the last index must be zero.
        while bitpos < payload.len() * 8 {
            if payload[bitpos >> 3] >> (bitpos & 7) & 1 == 1 {
                return Err(Error::Format(format!(
                    "nonzero padding bit at byte {}",
                    HEADER_LEN + bitpos / 8
                )));
            }
            bitpos += 1;
        }
        Ok(CodeStream {
            sample_rate,
            frame_rate,
            n_codebooks,
            codebook_size,
            n_frames,
            indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table1_stream(n_codebooks: u16) -> CodeStream {
        CodeStream {
            sample_rate: 24_000,
            frame_rate: 75,
            n_codebooks,
            codebook_size: 1024,
            n_frames: 0,
            indices: vec![],
        }
    }

    #[test]
    fn bandwidth_mapping_matches_published_table() {
        // 1024-entry codebooks at 75 Hz frames: 4 -> 3 kbps, 8 -> 6, 16 -> 12.
        assert_eq!(table1_stream(4).bits_per_frame(), 40);
        assert_eq!(table1_stream(4).bandwidth_bps(), 3000.0);
        assert_eq!(table1_stream(8).bandwidth_bps(), 6000.0);
        assert_eq!(table1_stream(16).bandwidth_bps(), 12_000.0);
    }

    #[test]
    fn pack_unpack_identity_hand_case() {
        let s = CodeStream {
            sample_rate: 8000,
            frame_rate: 50,
            n_codebooks: 2,
            codebook_size: 64,
            n_frames: 3,
            indices: vec![0, 63, 17, 42, 1, 2],
        };
        let bytes = s.pack().unwrap();
        assert_eq!(CodeStream::unpack(&bytes).unwrap(), s);
    }

    #[test]
    fn truncated_and_oversized_payloads_rejected() {
        let s = table1_stream(4);
        let mut stream = s;
        stream.n_frames = 2;
        stream.indices = vec![5; 8];
        let bytes = stream.pack().unwrap();
        let err = CodeStream::unpack(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(CodeStream::unpack(&longer).is_err());
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let mut stream = table1_stream(4);
        stream.n_frames = 1;
        stream.indices = vec![0, 1, 2, 3];
        let bytes = stream.pack().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CodeStream::unpack(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        let err = CodeStream::unpack(&bad).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn index_overflow_rejected_at_pack_time() {
        let s = CodeStream {
            sample_rate: 8000,
            frame_rate: 50,
            n_codebooks: 1,
            codebook_size: 64,
            n_frames: 1,
            indices: vec![64],
        };
        assert!(s.pack().is_err());
    }

    #[test]
    fn non_power_of_two_codebook_overflow_rejected_at_unpack() {
        // 6-bit packing for size 48: values 48..63 fit the bits but not the book.
        let good = CodeStream {
            sample_rate: 8000,
            frame_rate: 50,
            n_codebooks: 1,
            codebook_size: 64,
            n_frames: 1,
            indices: vec![50],
        };
        let mut bytes = good.pack().unwrap();
        bytes[16..20].copy_from_slice(&48u32.to_le_bytes());
        let err = CodeStream::unpack(&bytes).unwrap_err();
        assert!(err.to_string().contains("exceeds codebook size"), "{err}");
    }

    proptest! {
        #[test]
        fn random_streams_round_trip_bit_exact(
            seed in 0u64..10_000,
            n_frames in 1u32..40,
            n_codebooks in 1u16..9,
            size_bits in 1u32..12,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let codebook_size = (1u32 << size_bits).max(2);
            let n = n_frames as usize * n_codebooks as usize;
            let s = CodeStream {
                sample_rate: rng.gen_range(4000..48_000),
                frame_rate: rng.gen_range(10..200),
                n_codebooks,
                codebook_size,
                n_frames,
                indices: (0..n).map(|_| rng.gen_range(0..codebook_size)).collect(),
            };
            let bytes = s.pack().unwrap();
            prop_assert_eq!(CodeStream::unpack(&bytes).unwrap(), s);
        }
    }
}
