//! Registration check by DNS resolution.

use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::time::Duration;

use hickory_proto::op::{Message, MessageType, OpCode, Query, ResponseCode};
use hickory_proto::rr::{Name, RecordType};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::ProbeError;
use crate::fixture::FixtureDir;
use crate::retry::RetryPolicy;

/// Outcome of one resolution attempt that produced a verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    NxDomain,
    /// NOERROR with the records found; empty means no data of any probed type.
    Records(Vec<String>),
}

/// One query round for a name. Timeouts and server failures are errors,
/// never a verdict.
pub trait Resolver: Send + Sync {
    fn lookup(&self, fqdn: &str) -> Result<Lookup, ProbeError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsProbe {
    pub exists: bool,
    pub records: Vec<String>,
    pub attempts: u32,
}

/// A name exists iff an NS, A or AAAA record resolves.
pub fn probe_dns(
    fqdn: &str,
    resolver: &dyn Resolver,
    retry: &RetryPolicy,
    clock: &dyn Clock,
) -> Result<DnsProbe, ProbeError> {
    let (lookup, attempts) = retry.run(clock, &format!("dns {fqdn}"), || resolver.lookup(fqdn))?;
    Ok(match lookup {
        Lookup::NxDomain => DnsProbe {
            exists: false,
            records: Vec::new(),
            attempts,
        },
        Lookup::Records(records) => DnsProbe {
            exists: !records.is_empty(),
            records,
            attempts,
        },
    })
}

/// Resolver over `<fixtures>/<fqdn>.status` (`NOERROR`, `NXDOMAIN`,
/// `SERVFAIL` or `TIMEOUT`) and `<fqdn>.json` (array of record strings such
/// as `"A 93.184.216.34"`). Names without fixtures are NXDOMAIN.
#[derive(Debug)]
pub struct FixtureResolver {
    dir: FixtureDir,
}

impl FixtureResolver {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: FixtureDir::new(dir),
        }
    }
}

impl Resolver for FixtureResolver {
    fn lookup(&self, fqdn: &str) -> Result<Lookup, ProbeError> {
        let Some(resp) = self.dir.fetch(fqdn, "NOERROR")? else {
            return Ok(Lookup::NxDomain);
        };
        match resp.status.to_ascii_uppercase().as_str() {
            "NXDOMAIN" => Ok(Lookup::NxDomain),
            "NOERROR" => {
                let records: Vec<String> = match resp.body {
                    Some(b) => serde_json::from_str(&b).map_err(|e| ProbeError::Fixture {
                        path: self.dir.root().join(format!("{fqdn}.json")),
                        reason: e.to_string(),
                    })?,
                    None => Vec::new(),
                };
                Ok(Lookup::Records(records))
            }
            "TIMEOUT" => Err(ProbeError::ResolverTimeout(fqdn.to_string())),
            other => Err(ProbeError::ResolverError(fqdn.to_string(), other.to_string())),
        }
    }
}

/// Plain UDP queries to a recursive resolver, trying NS, then A, then AAAA.
#[derive(Debug, Clone)]
pub struct UdpResolver {
    pub server: SocketAddr,
    pub timeout: Duration,
}

impl UdpResolver {
    pub fn new(server: SocketAddr, timeout: Duration) -> Self {
        Self { server, timeout }
    }

    fn query(&self, name: &Name, rtype: RecordType) -> Result<Message, ProbeError> {
        let fail = |why: String| ProbeError::ResolverError(name.to_string(), why);
        let mut msg = Message::new();
        msg.set_id(query_id(name, rtype))
            .set_message_type(MessageType::Query)
            .set_op_code(OpCode::Query)
            .set_recursion_desired(true)
            .add_query(Query::query(name.clone(), rtype));
        let bytes = msg.to_vec().map_err(|e| fail(e.to_string()))?;
        let bind: SocketAddr = if self.server.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }
            .parse()
            .expect("literal socket address");
        let sock = UdpSocket::bind(bind).map_err(|e| fail(e.to_string()))?;
        sock.set_read_timeout(Some(self.timeout))
            .map_err(|e| fail(e.to_string()))?;
        sock.send_to(&bytes, self.server).map_err(|e| fail(e.to_string()))?;
        let mut buf = [0u8; 4096];
        loop {
            let (n, from) = sock.recv_from(&mut buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
                    ProbeError::ResolverTimeout(name.to_string())
                }
                _ => fail(e.to_string()),
            })?;
            if from != self.server {
                continue;
            }
            let reply = Message::from_vec(&buf[..n]).map_err(|e| fail(e.to_string()))?;
            if reply.id() == msg.id() {
                return Ok(reply);
            }
        }
    }
}

/// Query id derived from the question, so reruns send identical packets.
fn query_id(name: &Name, rtype: RecordType) -> u16 {
    let mut h: u16 = u16::from(rtype).wrapping_mul(31);
    for b in name.to_ascii().bytes() {
        h = h.wrapping_mul(31).wrapping_add(u16::from(b));
    }
    h
}

impl Resolver for UdpResolver {
    fn lookup(&self, fqdn: &str) -> Result<Lookup, ProbeError> {
        let name = Name::from_ascii(format!("{}.", fqdn.trim_end_matches('.')))
            .map_err(|e| ProbeError::InvalidDomain(fqdn.to_string(), e.to_string()))?;
        for rtype in [RecordType::NS, RecordType::A, RecordType::AAAA] {
            let reply = self.query(&name, rtype)?;
            match reply.response_code() {
                ResponseCode::NoError => {}
                ResponseCode::NXDomain => return Ok(Lookup::NxDomain),
                code => return Err(ProbeError::ResolverError(fqdn.to_string(), code.to_string())),
            }
            let records: Vec<String> = reply
                .answers()
                .iter()
                .filter(|r| r.record_type() == rtype)
                .filter_map(|r| r.data().map(|d| format!("{rtype} {d}")))
                .collect();
            if !records.is_empty() {
                return Ok(Lookup::Records(records));
            }
        }
        Ok(Lookup::Records(Vec::new()))
    }
}
