//! Checkpoint files.
//!
//! A checkpoint is one ASCII header line followed by a binary body:
//!
//! ```text
//! FLAICF v1 <KIND> d=<d> dp=<d'> beta=<β> items=<n> users=<m> design=<1|2> mode=<prod|concat> alpha=<α> layers=<w1,w2,..|->\n
//! ```
//!
//! The body holds every [`ParameterSet`] array in the order of
//! [`ParameterSet::arrays`] (`P, Q, W, b, H, h, W1, b1, .., WL, bL, V, b_user, b_item`).
//! Each array is a little-endian `u64` element count followed by that many
//! little-endian IEEE-754 `f64` values, matrices row-major. Arrays a model
//! does not use are written with count 0. Reals in the header use the
//! shortest round-trip decimal form, so a save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::{AttentionMode, Design, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::params::ParameterSet;

pub const MAGIC: &str = "FLAICF";
pub const VERSION: &str = "v1";

fn header_line(params: &ParameterSet, config: &ModelConfig, user_count: usize) -> String {
    let layers = if config.deep_layers.is_empty() {
        "-".to_string()
    } else {
        config
            .deep_layers
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        "{MAGIC} {VERSION} {} d={} dp={} beta={:?} items={} users={} design={} mode={} alpha={:?} layers={}\n",
        config.kind,
        config.d,
        config.d_prime,
        config.beta,
        params.item_count(),
        user_count,
        config.design,
        config.attention_mode,
        config.alpha,
        layers
    )
}

/// Serializes a checkpoint into memory.
pub fn encode_checkpoint(params: &ParameterSet, config: &ModelConfig, user_count: usize) -> Vec<u8> {
    let header = header_line(params, config, user_count);
    let total: usize = params.arrays().iter().map(|(_, a)| 8 + 8 * a.len()).sum();
    let mut buf = Vec::with_capacity(header.len() + total);
    buf.extend_from_slice(header.as_bytes());
    for (_, arr) in params.arrays() {
        buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
        for v in arr {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(params: &ParameterSet, config: &ModelConfig, user_count: usize, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, config, user_count);
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Everything recovered from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub config: ModelConfig,
    pub item_count: usize,
    pub user_count: usize,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

struct Header {
    config: ModelConfig,
    items: usize,
    users: usize,
}

fn parse_header(line: &str) -> Result<Header> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(Error::Format("missing FLAICF magic".into()));
    }
    match tokens.next() {
        Some(VERSION) => {}
        Some(other) => {
            return Err(Error::Version {
                found: other.to_string(),
                expected: VERSION.into(),
            })
        }
        None => return Err(Error::Format("missing version".into())),
    }
    let kind: ModelKind = tokens
        .next()
        .ok_or_else(|| Error::Format("missing model kind".into()))?
        .parse()
        .map_err(|_| Error::Format("bad model kind".into()))?;

    let mut fields = std::collections::HashMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field `{tok}`")))?;
        fields.insert(k, v);
    }
    fn get<'a>(fields: &std::collections::HashMap<&str, &'a str>, key: &str) -> Result<&'a str> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing header field `{key}`")))
    }
    fn num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad value `{s}` for header field `{key}`")))
    }

    let layers_raw = get(&fields, "layers")?;
    let deep_layers = if layers_raw == "-" {
        Vec::new()
    } else {
        layers_raw
            .split(',')
            .map(|w| num::<usize>(w, "layers"))
            .collect::<Result<Vec<_>>>()?
    };
    let config = ModelConfig {
        kind,
        design: get(&fields, "design")?
            .parse::<Design>()
            .map_err(|_| Error::Format("bad design".into()))?,
        attention_mode: get(&fields, "mode")?
            .parse::<AttentionMode>()
            .map_err(|_| Error::Format("bad attention mode".into()))?,
        d: num(get(&fields, "d")?, "d")?,
        d_prime: num(get(&fields, "dp")?, "dp")?,
        beta: num(get(&fields, "beta")?, "beta")?,
        alpha: num(get(&fields, "alpha")?, "alpha")?,
        deep_layers,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("header describes an invalid model: {e}")))?;
    Ok(Header {
        config,
        items: num(get(&fields, "items")?, "items")?,
        users: num(get(&fields, "users")?, "users")?,
    })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if !bytes.starts_with(MAGIC.as_bytes()) {
        return Err(Error::Format("missing FLAICF magic".into()));
    }
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Truncated("header".into()))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let header = parse_header(line)?;

    let mut params = ParameterSet::zeros(&header.config, header.items, header.users);
    let mut rest = &bytes[nl + 1..];
    for (name, arr) in params.arrays_mut() {
        if rest.len() < 8 {
            return Err(Error::Truncated(name));
        }
        let (count_bytes, tail) = rest.split_at(8);
        let count = u64::from_le_bytes(count_bytes.try_into().expect("8 bytes")) as usize;
        if count != arr.len() {
            return Err(Error::SizeMismatch {
                array: name,
                expected: arr.len(),
                actual: count,
            });
        }
        let need = count * 8;
        if tail.len() < need {
            return Err(Error::Truncated(name));
        }
        for (v, chunk) in arr.iter_mut().zip(tail[..need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        rest = &tail[need..];
    }
    if !rest.is_empty() {
        return Err(Error::SizeMismatch {
            array: "trailing data".into(),
            expected: 0,
            actual: rest.len(),
        });
    }
    Ok(Checkpoint {
        params,
        config: header.config,
        item_count: header.items,
        user_count: header.users,
    })
}
