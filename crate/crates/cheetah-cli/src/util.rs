//! Key files, parameter files, and engine construction shared by the
//! subcommands.
//!
//! Key file format: magic "CHTK" (4B) | role (1B) | params digest (8B LE) |
//! key seed (8B LE) | crc32 footer. Key generation is deterministic under
//! (params, role, seed), so the seed is the key material; the digest pins
//! the parameter set the key belongs to.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cheetah_core::crc32::crc32;
use cheetah_core::phe::{Backend, Owner, PheEngine, PheParams, SecretKey};

const KEY_MAGIC: &[u8; 4] = b"CHTK";

pub fn write_key(path: &Path, owner: Owner, params: &PheParams, seed: u64) -> Result<()> {
    let mut bytes = Vec::with_capacity(25);
    bytes.extend_from_slice(KEY_MAGIC);
    bytes.push(owner.wire_byte());
    bytes.extend_from_slice(&params.digest().to_le_bytes());
    bytes.extend_from_slice(&seed.to_le_bytes());
    let crc = crc32(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes).with_context(|| format!("writing key file {}", path.display()))?;
    Ok(())
}

pub struct KeyFile {
    pub owner: Owner,
    pub params_digest: u64,
    pub seed: u64,
}

pub fn read_key(path: &Path) -> Result<KeyFile> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading key file {}", path.display()))?;
    if bytes.len() != 25 || &bytes[0..4] != KEY_MAGIC {
        bail!("{} is not a key file", path.display());
    }
    let footer = u32::from_le_bytes(bytes[21..25].try_into().unwrap());
    if crc32(&bytes[..21]) != footer {
        bail!("{}: checksum failure", path.display());
    }
    Ok(KeyFile {
        owner: Owner::from_wire(bytes[4]).map_err(|e| anyhow::anyhow!("{e}"))?,
        params_digest: u64::from_le_bytes(bytes[5..13].try_into().unwrap()),
        seed: u64::from_le_bytes(bytes[13..21].try_into().unwrap()),
    })
}

/// Load parameters from a JSON file, or the defaults for the literal
/// string "default".
pub fn load_params(spec: &str) -> Result<PheParams> {
    if spec == "default" {
        return Ok(PheParams::recommended());
    }
    let text =
        std::fs::read_to_string(spec).with_context(|| format!("reading parameter file {spec}"))?;
    let params: PheParams = serde_json::from_str(&text).context("parsing parameter file")?;
    params
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))?;
    Ok(params)
}

pub fn parse_backend(s: &str) -> Result<Backend> {
    match s.to_ascii_lowercase().as_str() {
        "clear" => Ok(Backend::Clear),
        "rlwe" => Ok(Backend::Rlwe),
        other => bail!("unknown backend {other} (use clear or rlwe)"),
    }
}

/// Backend choice: flag wins, then CHEETAH_BACKEND, then rlwe.
pub fn backend_from(flag: Option<&str>) -> Result<Backend> {
    match flag {
        Some(s) => parse_backend(s),
        None => match std::env::var("CHEETAH_BACKEND") {
            Ok(v) => parse_backend(&v),
            Err(_) => Ok(Backend::Rlwe),
        },
    }
}

/// Address choice: flag wins, then CHEETAH_ADDR, then localhost:7462.
pub fn addr_from(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(cheetah_core::transport::ADDR_ENV).ok())
        .unwrap_or_else(|| format!("127.0.0.1:{}", cheetah_core::transport::DEFAULT_PORT))
}

pub fn build_engine(params: PheParams, backend: Backend) -> Result<Arc<PheEngine>> {
    Ok(Arc::new(
        PheEngine::new(params, backend).map_err(|e| anyhow::anyhow!("{e}"))?,
    ))
}

/// Rebuild a secret key from its file against the given engine.
pub fn load_secret_key(path: &Path, engine: &PheEngine) -> Result<(SecretKey, KeyFile)> {
    let kf = read_key(path)?;
    if kf.params_digest != engine.params.digest() {
        bail!(
            "key {} was generated for different parameters",
            path.display()
        );
    }
    Ok((engine.keygen(kf.owner, kf.seed), kf))
}
