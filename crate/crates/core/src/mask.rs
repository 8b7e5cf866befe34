//! Binary selection over soft constraints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Bit `j` set means soft constraint `j` is imposed. Written as a string of
/// `0`/`1` characters, bit 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetMask {
    bits: Vec<bool>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskParseError {
    #[error("invalid mask character {ch:?} at position {pos}")]
    BadChar { ch: char, pos: usize },
    #[error("mask has {found} bits, expected {expected}")]
    Length { found: usize, expected: usize },
}

impl SubsetMask {
    pub fn all(n: usize) -> Self {
        Self {
            bits: vec![true; n],
        }
    }

    pub fn none(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Mask whose bit `j` is bit `j` of `value` (`j < n`).
    pub fn from_index(value: u64, n: usize) -> Self {
        Self {
            bits: (0..n).map(|j| (value >> j) & 1 == 1).collect(),
        }
    }

    /// Inverse of [`SubsetMask::from_index`]; only meaningful for `len() ≤ 64`.
    pub fn index(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | ((b as u64) << j))
    }

    /// Parse and check the length.
    pub fn parse_len(s: &str, expected: usize) -> Result<Self, MaskParseError> {
        let mask: SubsetMask = s.parse()?;
        if mask.len() != expected {
            return Err(MaskParseError::Length {
                found: mask.len(),
                expected,
            });
        }
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits.get(j).copied().unwrap_or(false)
    }

    pub fn set(&mut self, j: usize, value: bool) {
        self.bits[j] = value;
    }

    pub fn flip(&mut self, j: usize) {
        self.bits[j] = !self.bits[j];
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// True when every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &SubsetMask) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b)
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SubsetMask {
    type Err = MaskParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .trim()
            .chars()
            .enumerate()
            .map(|(pos, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(MaskParseError::BadChar { ch, pos }),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { bits })
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
