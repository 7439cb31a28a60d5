use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use crate::chaincore::Block;

pub const LOG_MAGIC: &[u8; 4] = b"INFN";
pub const LOG_VERSION: u8 = 1;
const LOG_HEADER_LEN: u64 = 5;

/// Blocks parsed from a log, with the byte offset just past each record.
pub(crate) struct LogContents {
    pub blocks: Vec<(Block, u64)>,
    /// Bytes after the last well-formed record.
    pub torn_tail: bool,
}

pub(crate) fn read_log(path: &Path) -> io::Result<LogContents> {
    let bytes = fs::read(path)?;
    if bytes.len() < LOG_HEADER_LEN as usize {
        // A crash between create and header write leaves an empty file.
        return Ok(LogContents {
            blocks: Vec::new(),
            torn_tail: !bytes.is_empty(),
        });
    }
    if &bytes[..4] != LOG_MAGIC || bytes[4] != LOG_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{} is not a chain log", path.display()),
        ));
    }
    let mut at = LOG_HEADER_LEN as usize;
    let mut blocks = Vec::new();
    while at + 4 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let end = at + 4 + len;
        if end > bytes.len() {
            break;
        }
        match Block::from_bytes(&bytes[at + 4..end]) {
            Ok(b) => blocks.push((b, end as u64)),
            Err(_) => break,
        }
        at = end;
    }
    Ok(LogContents {
        blocks,
        torn_tail: at != bytes.len(),
    })
}

pub(crate) struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Opens (creating if needed) a log and truncates it to `valid_len`
    /// bytes when a tail must be discarded.
    pub fn open(path: &Path, valid_len: Option<u64>) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let len = file.metadata()?.len();
        if len < LOG_HEADER_LEN {
            file.set_len(0)?;
            let mut header = LOG_MAGIC.to_vec();
            header.push(LOG_VERSION);
            file.write_all(&header)?;
            file.sync_data()?;
        } else if let Some(valid) = valid_len {
            if valid < len {
                file.set_len(valid.max(LOG_HEADER_LEN))?;
                file.sync_data()?;
            }
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, block: &Block) -> io::Result<()> {
        let body = block.to_bytes();
        let mut record = Vec::with_capacity(4 + body.len());
        record.extend_from_slice(&(body.len() as u32).to_be_bytes());
        record.extend_from_slice(&body);
        self.file.write_all(&record)?;
        self.file.flush()
    }
}

pub(crate) fn header_len() -> u64 {
    LOG_HEADER_LEN
}
