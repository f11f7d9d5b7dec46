// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation bundles: per-token activations of one conversation at one layer.
//!
//! On-disk layout (`.ppab`), all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PPAB`                            |
//! | 4      | 4    | format version (`1`)                    |
//! | 8      | 4    | `d`, embedding dimension                |
//! | 12     | 4    | `n_tokens`                              |
//! | 16     | 4    | layer index                             |
//! | 20     | 4    | metadata length in bytes                |
//! | 24     | m    | UTF-8 JSON metadata                     |
//! | 24 + m | 4·n·d| `f32` matrix, row-major (token-major)   |
//!
//! Metadata keys: `conversation_id`, `model_id`, `token_strings`,
//! `turn_spans` (`[{"turn_index", "start", "end"}]`). Extra keys are kept.

use std::io::{Read, Write};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PPAB";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Token range `[start, end)` covered by one turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSpan {
    pub turn_index: usize,
    pub start: usize,
    pub end: usize,
}

impl TurnSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Position of the span's final token.
    pub fn last_token(&self) -> usize {
        self.end - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBundle {
    pub conversation_id: String,
    pub model_id: String,
    pub layer: u32,
    pub d: usize,
    pub token_strings: Vec<String>,
    pub turn_spans: Vec<TurnSpan>,
    /// `n_tokens × d`, row-major.
    pub matrix: Vec<f32>,
    /// Metadata keys this crate does not interpret, e.g. extraction settings.
    pub extra: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    conversation_id: String,
    model_id: String,
    token_strings: Vec<String>,
    turn_spans: Vec<TurnSpan>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

impl ActivationBundle {
    pub fn n_tokens(&self) -> usize {
        self.token_strings.len()
    }

    pub fn row(&self, token: usize) -> &[f32] {
        &self.matrix[token * self.d..(token + 1) * self.d]
    }

    pub fn row_mut(&mut self, token: usize) -> &mut [f32] {
        let d = self.d;
        &mut self.matrix[token * d..(token + 1) * d]
    }

    pub fn span_for_turn(&self, turn_index: usize) -> Option<&TurnSpan> {
        self.turn_spans
            .binary_search_by_key(&turn_index, |s| s.turn_index)
            .ok()
            .map(|i| &self.turn_spans[i])
    }

    /// Token positions inside some turn span, ascending.
    pub fn in_span_tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.turn_spans.iter().flat_map(|s| s.start..s.end)
    }

    /// Final in-span token, i.e. the last token of the last turn.
    pub fn last_in_span_token(&self) -> Option<usize> {
        self.turn_spans.last().map(TurnSpan::last_token)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_tokens();
        if n == 0 {
            return Err(Error::Format("bundle has no tokens".into()));
        }
        if self.d == 0 {
            return Err(Error::Format("bundle has d = 0".into()));
        }
        if n > u32::MAX as usize || self.d > u32::MAX as usize {
            return Err(Error::Format("bundle dimensions exceed u32".into()));
        }
        let expected = n
            .checked_mul(self.d)
            .ok_or_else(|| Error::Format("n_tokens × d overflows".into()))?;
        if self.matrix.len() != expected {
            return Err(Error::Format(format!(
                "matrix has {} entries, expected {n} × {} = {expected}",
                self.matrix.len(),
                self.d
            )));
        }
        if let Some(pos) = self.matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite activation at token {}, dim {}",
                pos / self.d,
                pos % self.d
            )));
        }
        let mut prev: Option<&TurnSpan> = None;
        for s in &self.turn_spans {
            if s.start >= s.end || s.end > n {
                return Err(Error::Format(format!(
                    "turn {} span [{}, {}) invalid for {n} tokens",
                    s.turn_index, s.start, s.end
                )));
            }
            if let Some(p) = prev {
                if s.turn_index <= p.turn_index {
                    return Err(Error::Format(format!(
                        "turn spans not ordered: {} after {}",
                        s.turn_index, p.turn_index
                    )));
                }
                if s.start < p.end {
                    return Err(Error::Format(format!(
                        "turn spans {} and {} overlap",
                        p.turn_index, s.turn_index
                    )));
                }
            }
            prev = Some(s);
        }
        Ok(())
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> Result<usize> {
        Ok(HEADER_LEN + self.metadata_json()?.len() + 4 * self.matrix.len())
    }

    fn metadata_json(&self) -> Result<Vec<u8>> {
        let meta = Metadata {
            conversation_id: self.conversation_id.clone(),
            model_id: self.model_id.clone(),
            token_strings: self.token_strings.clone(),
            turn_spans: self.turn_spans.clone(),
            extra: self.extra.clone(),
        };
        Ok(serde_json::to_vec(&meta)?)
    }
}

/// Writes `bundle` to `sink`, returning the number of bytes written.
pub fn write_bundle<W: Write>(bundle: &ActivationBundle, mut sink: W) -> Result<usize> {
    bundle.validate()?;
    let meta = bundle.metadata_json()?;
    let meta_len =
        u32::try_from(meta.len()).map_err(|_| Error::Format("metadata exceeds 4 GiB".into()))?;

    sink.write_all(&MAGIC)?;
    sink.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    sink.write_u32::<LittleEndian>(bundle.d as u32)?;
    sink.write_u32::<LittleEndian>(bundle.n_tokens() as u32)?;
    sink.write_u32::<LittleEndian>(bundle.layer)?;
    sink.write_u32::<LittleEndian>(meta_len)?;
    sink.write_all(&meta)?;
    let mut payload = vec![0u8; 4 * bundle.matrix.len()];
    LittleEndian::write_f32_into(&bundle.matrix, &mut payload);
    sink.write_all(&payload)?;
    Ok(HEADER_LEN + meta.len() + payload.len())
}

pub fn encode_bundle(bundle: &ActivationBundle) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_bundle(bundle, &mut buf)?;
    Ok(buf)
}

/// Reads a bundle from a byte stream, consuming it to the end.
pub fn read_bundle<R: Read>(mut source: R) -> Result<ActivationBundle> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    decode_bundle(&buf)
}

/// Decodes and validates a complete bundle held in memory.
pub fn decode_bundle(bytes: &[u8]) -> Result<ActivationBundle> {
    let actual = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual,
        });
    }
    if bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual,
        });
    }
    let field = |i: usize| LittleEndian::read_u32(&bytes[4 + 4 * i..8 + 4 * i]);
    let version = field(0);
    if version == 0 || version > FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let d = field(1) as u64;
    let n_tokens = field(2) as u64;
    let layer = field(3);
    let meta_len = field(4) as u64;

    // u32 fields cannot overflow u64 here.
    let expected = HEADER_LEN as u64 + meta_len + 4 * n_tokens * d;
    if actual != expected {
        return Err(Error::Truncated { expected, actual });
    }
    if n_tokens == 0 || d == 0 {
        return Err(Error::Format(format!(
            "empty bundle (n_tokens = {n_tokens}, d = {d})"
        )));
    }

    let meta_end = HEADER_LEN + meta_len as usize;
    let meta: Metadata = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])
        .map_err(|e| Error::Format(format!("metadata: {e}")))?;
    if meta.token_strings.len() as u64 != n_tokens {
        return Err(Error::Format(format!(
            "metadata lists {} token strings, header declares {n_tokens}",
            meta.token_strings.len()
        )));
    }

    let mut matrix = vec![0f32; (n_tokens * d) as usize];
    LittleEndian::read_f32_into(&bytes[meta_end..], &mut matrix);

    let bundle = ActivationBundle {
        conversation_id: meta.conversation_id,
        model_id: meta.model_id,
        layer,
        d: d as usize,
        token_strings: meta.token_strings,
        turn_spans: meta.turn_spans,
        matrix,
        extra: meta.extra,
    };
    bundle.validate()?;
    Ok(bundle)
}
