//! Numerical watermark payloads: `m` digits in base `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DIGIT_ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// A watermark message. Text form is uppercase base-`b` digits of length
/// exactly `m` (hex for base 16, decimal for base 10).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WatermarkMessage {
    digits: Vec<u8>,
    base: u8,
}

impl WatermarkMessage {
    pub fn new(digits: Vec<u8>, base: u8) -> Result<Self> {
        if base < 2 {
            return Err(Error::Message(format!("base {base} must be at least 2")));
        }
        if base as usize > DIGIT_ALPHABET.len() {
            return Err(Error::Message(format!(
                "base {base} beyond the supported alphabet (max {})",
                DIGIT_ALPHABET.len()
            )));
        }
        if digits.is_empty() {
            return Err(Error::Message("message needs at least one digit".into()));
        }
        if let Some(&bad) = digits.iter().find(|&&d| d >= base) {
            return Err(Error::Message(format!(
                "digit {bad} out of range for base {base}"
            )));
        }
        Ok(WatermarkMessage { digits, base })
    }

    /// Uniformly random message.
    pub fn random(m: usize, base: u8, rng: &mut impl Rng) -> Result<Self> {
        let digits = (0..m).map(|_| rng.gen_range(0..base)).collect();
        WatermarkMessage::new(digits, base)
    }

    /// Parses the CLI text form; length and digit range must match exactly.
    pub fn parse(text: &str, m: usize, base: u8) -> Result<Self> {
        if text.len() != m {
            return Err(Error::Message(format!(
                "message `{text}` has {} digits, model expects {m}",
                text.len()
            )));
        }
        let digits = text
            .chars()
            .map(|c| {
                DIGIT_ALPHABET[..base as usize]
                    .iter()
                    .position(|&a| a as char == c.to_ascii_uppercase())
                    .map(|d| d as u8)
                    .ok_or_else(|| {
                        Error::Message(format!("`{c}` is not a base-{base} digit in `{text}`"))
                    })
            })
            .collect::<Result<Vec<u8>>>()?;
        WatermarkMessage::new(digits, base)
    }

    pub fn to_text(&self) -> String {
        self.digits
            .iter()
            .map(|&d| DIGIT_ALPHABET[d as usize] as char)
            .collect()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn base(&self) -> u8 {
        self.base
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Information content in bits: `m * log2(b)`.
    pub fn capacity_bits(&self) -> f64 {
        self.digits.len() as f64 * (self.base as f64).log2()
    }
}

impl std::fmt::Display for WatermarkMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let m = WatermarkMessage::parse("A30F", 4, 16).unwrap();
        assert_eq!(m.digits(), &[10, 3, 0, 15]);
        assert_eq!(m.to_text(), "A30F");
    }

    #[test]
    fn decimal_round_trip() {
        let m = WatermarkMessage::parse("0912", 4, 10).unwrap();
        assert_eq!(m.digits(), &[0, 9, 1, 2]);
        assert_eq!(m.to_text(), "0912");
    }

    #[test]
    fn capacity_bits_match_table() {
        let hex = WatermarkMessage::parse("FFFF", 4, 16).unwrap();
        assert_eq!(hex.capacity_bits(), 16.0);
        let dec = WatermarkMessage::parse("9999", 4, 10).unwrap();
        assert!((dec.capacity_bits() - 13.2877).abs() < 1e-3);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(WatermarkMessage::parse("A30", 4, 16).is_err());
        assert!(WatermarkMessage::parse("A30G", 4, 16).is_err());
        assert!(WatermarkMessage::new(vec![16, 0, 0, 0], 16).is_err());
        assert!(WatermarkMessage::new(vec![], 16).is_err());
        assert!(WatermarkMessage::new(vec![0], 1).is_err());
    }

    #[test]
    fn lower_case_accepted() {
        let m = WatermarkMessage::parse("a30f", 4, 16).unwrap();
        assert_eq!(m.to_text(), "A30F");
    }
}
