use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::PeerError;
use crate::wire::{NetAddress, PeerAddress};

pub const ADDRESS_BOOK_CAPACITY: usize = 1024;
/// Consecutive failures after which an address is dialed last.
pub const DEMOTION_FAILURES: u32 = 3;

/// Known peer addresses, persisted as `host port last_seen failures` lines.
#[derive(Debug, Clone)]
pub struct AddressBook {
    entries: BTreeMap<(String, u16), PeerAddress>,
    capacity: usize,
}

impl Default for AddressBook {
    fn default() -> Self {
        Self::new(ADDRESS_BOOK_CAPACITY)
    }
}

impl AddressBook {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, addr: &NetAddress) -> Option<&PeerAddress> {
        self.entries.get(&(addr.host.clone(), addr.port))
    }

    /// Adds an address or refreshes its `last_seen`.
    pub fn insert(&mut self, addr: NetAddress, last_seen: u64) {
        let key = (addr.host.clone(), addr.port);
        match self.entries.get_mut(&key) {
            Some(e) => e.last_seen = e.last_seen.max(last_seen),
            None => {
                self.entries.insert(key, PeerAddress::new(addr, last_seen));
                self.evict();
            }
        }
    }

    fn insert_entry(&mut self, entry: PeerAddress) {
        self.entries.insert((entry.host.clone(), entry.port), entry);
        self.evict();
    }

    /// Drops the worst entries: most failures first, then oldest `last_seen`.
    fn evict(&mut self) {
        while self.entries.len() > self.capacity {
            let worst = self
                .entries
                .iter()
                .max_by(|(ka, a), (kb, b)| {
                    a.failures
                        .cmp(&b.failures)
                        .then(b.last_seen.cmp(&a.last_seen))
                        .then(kb.cmp(ka))
                })
                .map(|(k, _)| k.clone())
                .expect("book is non-empty");
            self.entries.remove(&worst);
        }
    }

    pub fn record_failure(&mut self, addr: &NetAddress) {
        if let Some(e) = self.entries.get_mut(&(addr.host.clone(), addr.port)) {
            e.record_failure();
        }
    }

    pub fn record_handshake(&mut self, addr: &NetAddress, now: u64) {
        let key = (addr.host.clone(), addr.port);
        match self.entries.get_mut(&key) {
            Some(e) => e.record_handshake(now),
            None => self.insert(addr.clone(), now),
        }
    }

    pub fn is_demoted(&self, addr: &NetAddress) -> bool {
        self.get(addr).is_some_and(|e| e.failures >= DEMOTION_FAILURES)
    }

    /// Addresses in dial order: healthy before demoted, fewer failures
    /// first, most recently seen first.
    pub fn dial_order(&self) -> Vec<NetAddress> {
        let mut all: Vec<&PeerAddress> = self.entries.values().collect();
        all.sort_by(|a, b| {
            (a.failures >= DEMOTION_FAILURES)
                .cmp(&(b.failures >= DEMOTION_FAILURES))
                .then(a.failures.cmp(&b.failures))
                .then(b.last_seen.cmp(&a.last_seen))
                .then((&a.host, a.port).cmp(&(&b.host, b.port)))
        });
        all.into_iter().map(PeerAddress::net).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PeerAddress> {
        self.entries.values()
    }

    pub fn parse(text: &str) -> Result<Self, PeerError> {
        let mut book = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| PeerError::AddressBookLine {
                line: i + 1,
                reason: reason.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [host, port, last_seen, failures] = parts[..] else {
                return Err(bad("expected 4 fields"));
            };
            let port: u16 = port.parse().map_err(|_| bad("bad port"))?;
            if port == 0 {
                return Err(bad("port must be nonzero"));
            }
            book.insert_entry(PeerAddress {
                host: host.to_string(),
                port,
                last_seen: last_seen.parse().map_err(|_| bad("bad last_seen"))?,
                failures: failures.parse().map_err(|_| bad("bad failures"))?,
            });
        }
        Ok(book)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&format!("{} {} {} {}\n", e.host, e.port, e.last_seen, e.failures));
        }
        out
    }

    /// Missing file yields an empty book.
    pub fn load(path: &Path) -> Result<Self, PeerError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PeerError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(self.render().as_bytes())?;
        f.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u16) -> NetAddress {
        NetAddress::new(format!("10.0.0.{n}"), 4000 + n).unwrap()
    }

    #[test]
    fn no_duplicates() {
        let mut b = AddressBook::default();
        b.insert(addr(1), 5);
        b.insert(addr(1), 9);
        b.insert(addr(1), 2);
        assert_eq!(b.len(), 1);
        assert_eq!(b.get(&addr(1)).unwrap().last_seen, 9);
    }

    #[test]
    fn eviction_prefers_failures_then_age() {
        let mut b = AddressBook::new(3);
        b.insert(addr(1), 100);
        b.insert(addr(2), 50);
        b.insert(addr(3), 200);
        b.record_failure(&addr(3));
        b.insert(addr(4), 10);
        assert!(b.get(&addr(3)).is_none());
        b.insert(addr(5), 300);
        assert!(b.get(&addr(4)).is_none());
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn failures_reset_only_on_handshake() {
        let mut b = AddressBook::default();
        b.insert(addr(1), 1);
        for _ in 0..3 {
            b.record_failure(&addr(1));
        }
        assert!(b.is_demoted(&addr(1)));
        b.insert(addr(1), 50);
        assert_eq!(b.get(&addr(1)).unwrap().failures, 3);
        b.record_handshake(&addr(1), 60);
        assert_eq!(b.get(&addr(1)).unwrap().failures, 0);
    }

    #[test]
    fn demoted_dialed_last() {
        let mut b = AddressBook::default();
        b.insert(addr(1), 100);
        b.insert(addr(2), 1);
        for _ in 0..3 {
            b.record_failure(&addr(1));
        }
        assert_eq!(b.dial_order(), vec![addr(2), addr(1)]);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("peers.txt");
        let mut b = AddressBook::default();
        b.insert(addr(1), 7);
        b.insert(NetAddress::new("seed.example.org", 443).unwrap(), 8);
        b.record_failure(&addr(1));
        b.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("10.0.0.1 4001 7 1\n"));
        let loaded = AddressBook::load(&path).unwrap();
        assert_eq!(loaded.render(), b.render());
        assert!(AddressBook::load(&dir.path().join("missing")).unwrap().is_empty());
        assert!(AddressBook::parse("host 0 1 1").is_err());
        assert!(AddressBook::parse("host 1 1").is_err());
    }
}
