//! Golden-vector files: one block per line, lowercase hex of the full
//! serialized block. Blank lines and `#` comments are skipped.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{Block, ChainError};

pub fn encode_lines<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&b.to_hex());
        out.push('\n');
    }
    out
}

pub fn parse_lines(text: &str) -> Result<Vec<Block>, ChainError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Block::from_hex)
        .collect()
}

pub fn write_file<'a>(path: &Path, blocks: impl IntoIterator<Item = &'a Block>) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(encode_lines(blocks).as_bytes())?;
    f.sync_all()
}

pub fn read_file(path: &Path) -> io::Result<Vec<Block>> {
    let text = fs::read_to_string(path)?;
    parse_lines(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
