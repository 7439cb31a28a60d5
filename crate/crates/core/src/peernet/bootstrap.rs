use std::collections::{BTreeSet, VecDeque};
use std::time::Duration;

use super::AddressBook;
use crate::wire::NetAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DialSource {
    Manual,
    AddressBook,
    DnsSeed,
    HardCoded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub manual: Vec<NetAddress>,
    pub dns_seeds: Vec<String>,
    pub seeds: Vec<NetAddress>,
    /// Port paired with addresses returned by DNS seeds.
    pub default_port: u16,
    pub min_peers: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            manual: Vec::new(),
            dns_seeds: Vec::new(),
            seeds: Vec::new(),
            default_port: 7468,
            min_peers: 3,
        }
    }
}

/// Resolves a DNS seed hostname to dialable addresses.
pub trait SeedResolver {
    fn resolve(&self, host: &str, port: u16) -> Vec<NetAddress>;
}

/// Resolves nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoResolver;

impl SeedResolver for NoResolver {
    fn resolve(&self, _host: &str, _port: u16) -> Vec<NetAddress> {
        Vec::new()
    }
}

impl<F> SeedResolver for F
where
    F: Fn(&str, u16) -> Vec<NetAddress>,
{
    fn resolve(&self, host: &str, port: u16) -> Vec<NetAddress> {
        self(host, port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BootstrapOutcome {
    Connected(Vec<NetAddress>),
    Failed { retry_in: Duration },
}

/// Dial planner. Sources are tried in order (manual, address book, DNS
/// seeds, hard-coded seeds) until `min_peers` sessions are up or every
/// candidate has been tried.
#[derive(Debug)]
pub struct Bootstrap {
    queue: VecDeque<(NetAddress, DialSource)>,
    dns_hosts: VecDeque<String>,
    hard_coded: Vec<NetAddress>,
    default_port: u16,
    tried: BTreeSet<NetAddress>,
    connected: Vec<NetAddress>,
    min_peers: usize,
}

impl Bootstrap {
    pub fn new(config: &BootstrapConfig, book: &AddressBook) -> Self {
        let mut queue: VecDeque<_> = config.manual.iter().map(|a| (a.clone(), DialSource::Manual)).collect();
        queue.extend(book.dial_order().into_iter().map(|a| (a, DialSource::AddressBook)));
        Self {
            queue,
            dns_hosts: config.dns_seeds.iter().cloned().collect(),
            hard_coded: config.seeds.clone(),
            default_port: config.default_port,
            tried: BTreeSet::new(),
            connected: Vec::new(),
            min_peers: config.min_peers.max(1),
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.connected.len() >= self.min_peers
    }

    /// Next address to dial, or `None` once satisfied or exhausted.
    pub fn next_dial(&mut self, resolver: &dyn SeedResolver) -> Option<(NetAddress, DialSource)> {
        if self.is_satisfied() {
            return None;
        }
        loop {
            if let Some((addr, src)) = self.queue.pop_front() {
                if self.tried.insert(addr.clone()) {
                    return Some((addr, src));
                }
                continue;
            }
            if let Some(host) = self.dns_hosts.pop_front() {
                self.queue.extend(
                    resolver
                        .resolve(&host, self.default_port)
                        .into_iter()
                        .map(|a| (a, DialSource::DnsSeed)),
                );
                continue;
            }
            if !self.hard_coded.is_empty() {
                let seeds = std::mem::take(&mut self.hard_coded);
                self.queue.extend(seeds.into_iter().map(|a| (a, DialSource::HardCoded)));
                continue;
            }
            return None;
        }
    }

    pub fn report(&mut self, addr: &NetAddress, ok: bool, book: &mut AddressBook, now: u64) {
        if ok {
            book.record_handshake(addr, now);
            self.connected.push(addr.clone());
        } else {
            book.record_failure(addr);
        }
    }

    pub fn connected(&self) -> &[NetAddress] {
        &self.connected
    }

    pub fn outcome(&self, backoff: &mut Backoff) -> BootstrapOutcome {
        if self.connected.is_empty() {
            BootstrapOutcome::Failed {
                retry_in: backoff.next_delay(),
            }
        } else {
            backoff.reset();
            BootstrapOutcome::Connected(self.connected.clone())
        }
    }
}

/// Exponential retry delay: 1 s doubling, capped at 5 minutes.
#[derive(Debug, Clone)]
pub struct Backoff {
    attempt: u32,
    base: Duration,
    cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            attempt: 0,
            base: Duration::from_secs(1),
            cap: Duration::from_secs(300),
        }
    }
}

impl Backoff {
    pub fn next_delay(&mut self) -> Duration {
        let factor = 1u32.checked_shl(self.attempt).unwrap_or(u32::MAX);
        self.attempt = self.attempt.saturating_add(1);
        self.base.saturating_mul(factor).min(self.cap)
    }

    pub fn reset(&mut self) {
        self.attempt = 0;
    }
}

/// Runs a full bootstrap pass with a blocking dialer.
pub fn run_bootstrap(
    config: &BootstrapConfig,
    book: &mut AddressBook,
    resolver: &dyn SeedResolver,
    backoff: &mut Backoff,
    now: u64,
    mut dial: impl FnMut(&NetAddress) -> bool,
) -> BootstrapOutcome {
    let mut plan = Bootstrap::new(config, book);
    while let Some((addr, _)) = plan.next_dial(resolver) {
        let ok = dial(&addr);
        plan.report(&addr, ok, book, now);
    }
    plan.outcome(backoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(host: &str, port: u16) -> NetAddress {
        NetAddress::new(host, port).unwrap()
    }

    #[test]
    fn source_order_and_stop_at_min_peers() {
        let mut book = AddressBook::default();
        book.insert(a("book", 1), 5);
        let cfg = BootstrapConfig {
            manual: vec![a("manual", 1)],
            dns_seeds: vec!["seed.example".into()],
            seeds: vec![a("hard", 1), a("hard", 2)],
            default_port: 9,
            min_peers: 3,
        };
        let resolver = |host: &str, port: u16| vec![a(&format!("{host}-ip"), port)];
        let mut order = Vec::new();
        let out = run_bootstrap(&cfg, &mut book, &resolver, &mut Backoff::default(), 10, |addr| {
            order.push(addr.to_string());
            true
        });
        assert_eq!(order, vec!["manual:1", "book:1", "seed.example-ip:9"]);
        assert!(matches!(out, BootstrapOutcome::Connected(v) if v.len() == 3));
    }

    #[test]
    fn manual_live_node_gives_one_session() {
        let mut book = AddressBook::default();
        let cfg = BootstrapConfig {
            manual: vec![a("live", 1)],
            ..Default::default()
        };
        let out = run_bootstrap(&cfg, &mut book, &NoResolver, &mut Backoff::default(), 1, |_| true);
        assert_eq!(out, BootstrapOutcome::Connected(vec![a("live", 1)]));
        assert_eq!(book.get(&a("live", 1)).unwrap().failures, 0);
    }

    #[test]
    fn dead_everything_fails_with_backoff() {
        let mut book = AddressBook::default();
        let cfg = BootstrapConfig {
            seeds: vec![a("dead", 1)],
            ..Default::default()
        };
        let mut backoff = Backoff::default();
        let mut delays = Vec::new();
        for _ in 0..11 {
            match run_bootstrap(&cfg, &mut book, &NoResolver, &mut backoff, 1, |_| false) {
                BootstrapOutcome::Failed { retry_in } => delays.push(retry_in.as_secs()),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(delays, vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 300, 300]);
        let empty = BootstrapConfig::default();
        assert!(matches!(
            run_bootstrap(&empty, &mut book, &NoResolver, &mut Backoff::default(), 1, |_| true),
            BootstrapOutcome::Failed { .. }
        ));
    }

    #[test]
    fn stale_book_entries_are_penalized() {
        let mut book = AddressBook::default();
        for i in 1..=5 {
            book.insert(a("stale", i), 100 + i as u64);
        }
        book.insert(a("live", 1), 1);
        let cfg = BootstrapConfig::default();
        let out = run_bootstrap(&cfg, &mut book, &NoResolver, &mut Backoff::default(), 500, |addr| {
            addr.host == "live"
        });
        assert_eq!(out, BootstrapOutcome::Connected(vec![a("live", 1)]));
        for i in 1..=5 {
            assert_eq!(book.get(&a("stale", i)).unwrap().failures, 1);
        }
        assert_eq!(book.get(&a("live", 1)).unwrap().last_seen, 500);
    }
}
