//! File formats: trial logs (JSON Lines or packed binary) and `.bits`
//! payloads with JSON sidecars.
//!
//! JSONL record: `{"i": 0, "game": true, "s": [1, 2], "a": [1, -1]}`.
//!
//! Binary log: the magic `KCBSLOG1`, a little-endian `u64` record count,
//! then 5 bytes per round: a flag byte (bit 7 game round, bits 3-6 setting
//! index into the game-setting table, bit 1 first outcome is +1, bit 0
//! second outcome is +1) followed by the round index as little-endian `u32`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitStream;
use crate::error::{Error, Result};
use crate::kcbs::SettingPair;
use crate::protocol::TrialRecord;
use crate::qutrit::Outcome;

pub const BINARY_MAGIC: &[u8; 8] = b"KCBSLOG1";
/// Logs longer than this are written in the binary format.
pub const BINARY_LOG_THRESHOLD: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Jsonl,
    Binary,
}

impl LogFormat {
    pub fn for_len(n: usize) -> Self {
        if n > BINARY_LOG_THRESHOLD {
            LogFormat::Binary
        } else {
            LogFormat::Jsonl
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    i: u64,
    game: bool,
    s: [u8; 2],
    a: [i64; 2],
}

pub fn write_jsonl<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    for t in trials {
        writeln!(
            w,
            "{{\"i\":{},\"game\":{},\"s\":[{},{}],\"a\":[{},{}]}}",
            t.index,
            t.is_game_round,
            t.setting.first(),
            t.setting.second(),
            t.outcomes.0.value(),
            t.outcomes.1.value()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a JSONL log; blank lines are skipped. Errors carry 1-based line
/// numbers.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { line: k + 1, message };
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let setting = SettingPair::new(rec.s[0], rec.s[1]).map_err(|e| parse(e.to_string()))?;
        let outcome = |v: i64| Outcome::from_value(v).ok_or_else(|| parse(format!("outcome {v} is not ±1")));
        out.push(TrialRecord {
            index: rec.i,
            is_game_round: rec.game,
            setting,
            outcomes: (outcome(rec.a[0])?, outcome(rec.a[1])?),
        });
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(trials.len() as u64).to_le_bytes())?;
    for t in trials {
        let index = u32::try_from(t.index)
            .map_err(|_| Error::invalid(format!("round index {} does not fit the binary log", t.index)))?;
        let flags = (t.is_game_round as u8) << 7
            | (t.setting.index() as u8) << 3
            | (t.outcomes.0.bit() as u8) << 1
            | t.outcomes.1.bit() as u8;
        w.write_all(&[flags])?;
        w.write_all(&index.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a binary log. Error "line" numbers are 1-based record numbers.
pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<TrialRecord>> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|_| Error::Parse {
        line: 0,
        message: "truncated binary log header".into(),
    })?;
    if &head[..8] != BINARY_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "missing binary log magic".into(),
        });
    }
    let count = u64::from_le_bytes(head[8..].try_into().expect("8 bytes"));
    let mut out = Vec::with_capacity(count.min(1 << 28) as usize);
    let mut rec = [0u8; 5];
    for k in 0..count {
        let line = k as usize + 1;
        r.read_exact(&mut rec).map_err(|_| Error::Parse {
            line,
            message: "truncated record".into(),
        })?;
        let flags = rec[0];
        if flags & 0b0000_0100 != 0 {
            return Err(Error::Parse {
                line,
                message: "reserved flag bit set".into(),
            });
        }
        let setting = SettingPair::from_index((flags >> 3 & 0xf) as usize).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let outcome = |bit: u8| if bit == 1 { Outcome::Plus } else { Outcome::Minus };
        out.push(TrialRecord {
            index: u32::from_le_bytes(rec[1..].try_into().expect("4 bytes")) as u64,
            is_game_round: flags >> 7 == 1,
            setting,
            outcomes: (outcome(flags >> 1 & 1), outcome(flags & 1)),
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Parse {
            line: count as usize + 1,
            message: "trailing bytes after last record".into(),
        });
    }
    Ok(out)
}

/// Write a log in the given format (or the size-based default).
pub fn write_trial_log(path: &Path, trials: &[TrialRecord], format: Option<LogFormat>) -> Result<LogFormat> {
    let format = format.unwrap_or_else(|| LogFormat::for_len(trials.len()));
    let w = BufWriter::new(File::create(path)?);
    match format {
        LogFormat::Jsonl => write_jsonl(w, trials)?,
        LogFormat::Binary => write_binary(w, trials)?,
    }
    Ok(format)
}

/// Read a log, detecting the binary format by its magic.
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    if r.fill_buf()?.starts_with(BINARY_MAGIC) {
        read_binary(r)
    } else {
        read_jsonl(r)
    }
}

/// Contents of a `.bits` sidecar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitsSidecar {
    pub length_bits: usize,
    pub sha256: String,
    pub role: String,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the packed payload and its sidecar.
pub fn write_bits(path: &Path, bits: &BitStream, role: &str) -> Result<BitsSidecar> {
    std::fs::write(path, bits.as_bytes())?;
    let sidecar = BitsSidecar {
        length_bits: bits.len(),
        sha256: bits.sha256_hex(),
        role: role.to_string(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(sidecar)
}

/// Read a payload, checking it against its sidecar.
pub fn read_bits(path: &Path) -> Result<(BitStream, BitsSidecar)> {
    let side_path = sidecar_path(path);
    let sidecar: BitsSidecar = serde_json::from_slice(&std::fs::read(&side_path)?)?;
    let bytes = std::fs::read(path)?;
    let found = hex::encode(Sha256::digest(&bytes));
    if found != sidecar.sha256 {
        return Err(Error::DigestMismatch {
            path: path.display().to_string(),
            expected: sidecar.sha256,
            found,
        });
    }
    let bits = BitStream::from_bytes(bytes, sidecar.length_bits)?;
    Ok((bits, sidecar))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = r.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(hex::encode(h.finalize()))
}
