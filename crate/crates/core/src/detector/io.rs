//! On-disk forms of [`RawSampleBlock`].
//!
//! Binary layout: eight text header lines, then `count` little-endian `i16`
//! codes.
//!
//! ```text
//! SDIQRNG-RAW
//! version 1
//! bits <adc bits>
//! count <number of codes>
//! config_hash <hex>
//! run_id <id or ->
//! clipped <number of clipped samples>
//! data i16le
//! ```

use std::path::Path;

use super::RawSampleBlock;
use crate::error::{Error, Result};
use crate::fsio;

pub const RAW_MAGIC: &str = "SDIQRNG-RAW";
const VERSION: u32 = 1;

pub fn encode_block_binary(block: &RawSampleBlock) -> Vec<u8> {
    let run_id = if block.run_id.is_empty() { "-" } else { &block.run_id };
    let header = format!(
        "{RAW_MAGIC}\nversion {VERSION}\nbits {}\ncount {}\nconfig_hash {}\nrun_id {}\nclipped {}\ndata i16le\n",
        block.bits,
        block.codes.len(),
        block.config_hash,
        run_id,
        block.clipped
    );
    let mut out = header.into_bytes();
    out.reserve(block.codes.len() * 2);
    for c in &block.codes {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_block_binary(bytes: &[u8], path: &Path) -> Result<RawSampleBlock> {
    let bad = |r: &str| Error::format(path, r);
    let mut pos = 0;
    let mut lines = Vec::with_capacity(8);
    for _ in 0..8 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header not utf-8"))?;
        lines.push(line);
        pos += end + 1;
    }
    if lines[0] != RAW_MAGIC {
        return Err(bad("bad magic"));
    }
    let field = |i: usize, key: &str| -> Result<&str> {
        lines[i]
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| bad(&format!("expected `{key}` on header line {}", i + 1)))
    };
    let version: u32 = field(1, "version")?.parse().map_err(|_| bad("version"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let bits: u32 = field(2, "bits")?.parse().map_err(|_| bad("bits"))?;
    let count: usize = field(3, "count")?.parse().map_err(|_| bad("count"))?;
    let config_hash = field(4, "config_hash")?.to_string();
    let run_id = match field(5, "run_id")? {
        "-" => String::new(),
        s => s.to_string(),
    };
    let clipped: u64 = field(6, "clipped")?.parse().map_err(|_| bad("clipped"))?;
    if field(7, "data")? != "i16le" {
        return Err(bad("unsupported data encoding"));
    }
    let payload = &bytes[pos..];
    if payload.len() != count * 2 {
        return Err(bad(&format!(
            "payload has {} bytes, header says {} codes",
            payload.len(),
            count
        )));
    }
    let codes = payload
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    let block = RawSampleBlock {
        codes,
        bits,
        config_hash,
        run_id,
        clipped,
    };
    block.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(block)
}

pub fn write_block_binary(block: &RawSampleBlock, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_block_binary(block))
}

pub fn read_block_binary(path: &Path) -> Result<RawSampleBlock> {
    decode_block_binary(&fsio::read(path)?, path)
}

/// One decimal code per line, no header.
pub fn write_block_csv(block: &RawSampleBlock, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(block.codes.len() * 5);
    for c in &block.codes {
        s.push_str(&c.to_string());
        s.push('\n');
    }
    fsio::write_atomic_str(path, &s)
}

/// Reads a debug CSV back; metadata not stored in the CSV must be supplied.
pub fn read_block_csv(path: &Path, bits: u32) -> Result<RawSampleBlock> {
    let text = fsio::read_to_string(path)?;
    let codes = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<i16>()
                .map_err(|_| Error::format(path, format!("bad code `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let block = RawSampleBlock {
        codes,
        bits,
        config_hash: String::new(),
        run_id: String::new(),
        clipped: 0,
    };
    block.validate()?;
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(codes: Vec<i16>) -> RawSampleBlock {
        RawSampleBlock {
            codes,
            bits: 8,
            config_hash: "00ff00ff00ff00ff".into(),
            run_id: "run-7".into(),
            clipped: 2,
        }
    }

    proptest! {
        #[test]
        fn binary_roundtrip(codes in proptest::collection::vec(-128i16..=127, 1..500)) {
            let b = block(codes);
            let bytes = encode_block_binary(&b);
            let back = decode_block_binary(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(back, b);
        }
    }

    #[test]
    fn header_is_eight_lines() {
        let bytes = encode_block_binary(&block(vec![1, -2, 3]));
        let header_len = bytes.len() - 6;
        let header = std::str::from_utf8(&bytes[..header_len]).unwrap();
        assert_eq!(header.lines().count(), 8);
        assert!(header.starts_with("SDIQRNG-RAW\nversion 1\nbits 8\ncount 3\n"));
        assert_eq!(&bytes[header_len..], &[1, 0, 0xfe, 0xff, 3, 0]);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut bytes = encode_block_binary(&block(vec![1, 2, 3]));
        bytes.pop();
        assert!(decode_block_binary(&bytes, Path::new("m")).is_err());
        let out_of_range = encode_block_binary(&block(vec![300]));
        assert!(decode_block_binary(&out_of_range, Path::new("m")).is_err());
        assert!(decode_block_binary(b"NOPE\n", Path::new("m")).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let b = block(vec![5, -7, 0, 127]);
        write_block_csv(&b, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "5\n-7\n0\n127\n");
        assert_eq!(read_block_csv(&p, 8).unwrap().codes, b.codes);
    }
}
