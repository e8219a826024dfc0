//! Versioned, checksummed model checkpoints.
//!
//! Layout: `RSEG` magic, u32 version, u64 payload length, u32 CRC32 of the
//! payload, then the payload — config, alphabets, bigram vocabulary, the
//! lexicon, and every named tensor. All integers little-endian; tensors are
//! raw little-endian f64, so a round trip is bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::alphabet::{Alphabet, TokenSpace};
use crate::corpus::BigramVocab;
use crate::lexicon::RadicalLexicon;
use crate::nn::Tensor;

use super::{Ablation, ModelConfig, ModelError, SegModel};

const MAGIC: &[u8; 4] = b"RSEG";
const VERSION: u32 = 1;

pub fn save_model(model: &SegModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let payload = encode_payload(model);
    let mut file = File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(payload.len() as u64).to_le_bytes())?;
    file.write_all(&crc32fast::hash(&payload).to_le_bytes())?;
    file.write_all(&payload)?;
    file.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SegModel, ModelError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(ModelError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Version(version));
    }
    let payload_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let checksum = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let payload = &bytes[20..];
    if payload.len() != payload_len {
        return Err(ModelError::Truncated);
    }
    if crc32fast::hash(payload) != checksum {
        return Err(ModelError::Checksum);
    }
    decode_payload(payload)
}

fn encode_payload(model: &SegModel) -> Vec<u8> {
    let mut out = Vec::new();
    let cfg = &model.config;
    out.push(Ablation::ALL.iter().position(|&a| a == cfg.ablation).unwrap() as u8);
    put_u64(&mut out, cfg.k as u64);
    put_u64(&mut out, cfg.d as u64);
    put_u64(&mut out, cfg.bigram_dim as u64);
    out.extend_from_slice(&cfg.dropout.to_le_bytes());
    out.push(cfg.replace_char_with_composition as u8);
    out.push(cfg.freeze_embeddings as u8);
    put_u64(&mut out, cfg.seed);

    out.push(model.alphabet.is_tied() as u8);
    put_space(&mut out, model.alphabet.char_space());
    if !model.alphabet.is_tied() {
        put_space(&mut out, model.alphabet.radical_space());
    }

    match &model.bigrams {
        None => out.push(0),
        Some(vocab) => {
            out.push(1);
            let tokens = &vocab.tokens()[2..];
            put_u64(&mut out, tokens.len() as u64);
            for token in tokens {
                put_u64(&mut out, token.len() as u64);
                out.extend_from_slice(token.as_bytes());
            }
        }
    }

    put_u64(&mut out, model.lexicon.len() as u64);
    for c in model.lexicon.characters() {
        let entry = model.lexicon.entry(c).unwrap();
        put_u32(&mut out, c as u32);
        put_u64(&mut out, entry.radicals.len() as u64);
        for &r in &entry.radicals {
            put_u32(&mut out, r as u32);
        }
        put_u64(&mut out, entry.semantic_index as u64);
    }

    put_u64(&mut out, model.params.len() as u64);
    for id in model.params.ids() {
        let name = model.params.name(id);
        let tensor = model.params.get(id);
        put_u64(&mut out, name.len() as u64);
        out.extend_from_slice(name.as_bytes());
        put_u64(&mut out, tensor.rows as u64);
        put_u64(&mut out, tensor.cols as u64);
        for x in &tensor.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode_payload(payload: &[u8]) -> Result<SegModel, ModelError> {
    let mut cur = Cursor { buf: payload, pos: 0 };
    let ablation_idx = cur.u8()? as usize;
    let ablation =
        *Ablation::ALL.get(ablation_idx).ok_or(ModelError::Corrupt("ablation index"))?;
    let config = ModelConfig {
        ablation,
        k: cur.u64()? as usize,
        d: cur.u64()? as usize,
        bigram_dim: cur.u64()? as usize,
        dropout: cur.f64()?,
        replace_char_with_composition: cur.u8()? != 0,
        freeze_embeddings: cur.u8()? != 0,
        seed: cur.u64()?,
    };
    if config.k == 0 || config.d == 0 {
        return Err(ModelError::Corrupt("zero dimension"));
    }

    let tied = cur.u8()? != 0;
    let chars = cur.space()?;
    let alphabet = if tied {
        Alphabet::from_spaces(chars, None)
    } else {
        let radicals = cur.space()?;
        Alphabet::from_spaces(chars, Some(radicals))
    };

    let bigrams = match cur.u8()? {
        0 => None,
        _ => {
            let count = cur.u64()? as usize;
            let mut tokens =
                vec![crate::alphabet::PAD_TOKEN.to_string(), crate::alphabet::UNK_TOKEN.to_string()];
            for _ in 0..count {
                let len = cur.u64()? as usize;
                let bytes = cur.take(len)?;
                let token = std::str::from_utf8(bytes)
                    .map_err(|_| ModelError::Corrupt("bigram token utf-8"))?;
                tokens.push(token.to_string());
            }
            Some(BigramVocab::from_tokens(tokens))
        }
    };

    let entry_count = cur.u64()? as usize;
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let c = cur.char()?;
        let n = cur.u64()? as usize;
        let mut radicals = Vec::with_capacity(n);
        for _ in 0..n {
            radicals.push(cur.char()?);
        }
        let semantic_index = cur.u64()? as usize;
        if radicals.is_empty() || semantic_index >= radicals.len() {
            return Err(ModelError::Corrupt("lexicon entry"));
        }
        entries.push((c, radicals, semantic_index));
    }
    let lexicon = RadicalLexicon::from_entries(entries);

    let mut model = SegModel::assemble(config, lexicon, alphabet, bigrams);
    let tensor_count = cur.u64()? as usize;
    let mut filled = vec![false; model.params.len()];
    for _ in 0..tensor_count {
        let name_len = cur.u64()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| ModelError::Corrupt("tensor name utf-8"))?
            .to_string();
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(cur.f64()?);
        }
        let id = model
            .params
            .id_by_name(&name)
            .ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
        let slot = model.params.get_mut(id);
        if slot.rows != rows || slot.cols != cols {
            return Err(ModelError::TensorShape {
                name,
                rows: slot.rows,
                cols: slot.cols,
                found_rows: rows,
                found_cols: cols,
            });
        }
        *slot = Tensor::from_vec(rows, cols, data);
        filled[model.params.ids().position(|i| i == id).unwrap()] = true;
    }
    if let Some(idx) = filled.iter().position(|&f| !f) {
        let name = model.params.name(model.params.ids().nth(idx).unwrap()).to_string();
        return Err(ModelError::MissingTensor(name));
    }
    if cur.pos != cur.buf.len() {
        return Err(ModelError::Corrupt("trailing bytes"));
    }
    Ok(model)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_space(out: &mut Vec<u8>, space: &TokenSpace) {
    let chars: Vec<char> = space.chars().collect();
    put_u64(out, chars.len() as u64);
    for c in chars {
        put_u32(out, c as u32);
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn char(&mut self) -> Result<char, ModelError> {
        char::from_u32(self.u32()?).ok_or(ModelError::Corrupt("code point"))
    }

    fn space(&mut self) -> Result<TokenSpace, ModelError> {
        let count = self.u64()? as usize;
        let mut chars = Vec::with_capacity(count);
        for _ in 0..count {
            chars.push(self.char()?);
        }
        Ok(TokenSpace::from_tokens(chars))
    }
}
