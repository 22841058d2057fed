//! Challenge-response attestation with authenticated sub-path installation
//! and MAC-ed evidence slices.
//!
//! Wire layouts, integers little-endian:
//!
//! ```text
//! request: 0x01 chal[16] mode:u8 width:u8 retry:u8 slice_size:u32
//!          min_code_addr:u32 blockmem_len:u32 blockmem mac[32]
//! slice:   0x02 seq:u32 is_final:u8 [digest[32] if final]
//!          payload_len:u32 payload mac[32]
//! frame:   len:u32 body
//! ```
//!
//! The request MAC covers every request byte before it. A slice MAC covers
//! the session challenge followed by every slice byte before it.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::mpsc;

use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;
use thiserror::Error;

use crate::blockmem::{deserialize_blockmem, serialize_blockmem};
use crate::cfg::Cfg;
use crate::codec::{deserialize_log, serialize_log, LogFormat};
use crate::engine::{expand, EngineError, SliceCompressor};
use crate::model::{
    AddrWidth, Address, CfLog, EngineConfig, LogElement, Mode, ModelError, RawLog, SubPathSpec, Transfer,
};

pub const KEY_LEN: usize = 32;
pub const CHAL_LEN: usize = 16;
pub const MAC_LEN: usize = 32;
pub const DIGEST_LEN: usize = 32;

const TAG_REQUEST: u8 = 0x01;
const TAG_SLICE: u8 = 0x02;

pub type Chal = [u8; CHAL_LEN];
pub type Tag = [u8; MAC_LEN];
pub type Digest = [u8; DIGEST_LEN];

/// SHA-256 of the attested program image.
pub fn image_digest(image: &[u8]) -> Digest {
    use sha2::Digest as _;
    Sha256::digest(image).into()
}

/// Shared secret. Never part of any message.
#[derive(Clone, PartialEq, Eq)]
pub struct Key([u8; KEY_LEN]);

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Key(..)")
    }
}

impl Key {
    pub fn new(bytes: [u8; KEY_LEN]) -> Self {
        Key(bytes)
    }

    /// Accepts 32 raw bytes or 64 hex digits (surrounding whitespace ignored).
    pub fn parse(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if let Ok(raw) = <[u8; KEY_LEN]>::try_from(bytes) {
            return Ok(Key(raw));
        }
        let text = std::str::from_utf8(bytes).map_err(|_| ProtocolError::BadKey)?.trim();
        if text.len() != 2 * KEY_LEN {
            return Err(ProtocolError::BadKey);
        }
        let mut out = [0u8; KEY_LEN];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&text[2 * i..2 * i + 2], 16).map_err(|_| ProtocolError::BadKey)?;
        }
        Ok(Key(out))
    }

    fn mac(&self, parts: &[&[u8]]) -> Tag {
        let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.0).expect("any key length");
        for p in parts {
            m.update(p);
        }
        m.finalize().into_bytes().into()
    }

    fn verify(&self, parts: &[&[u8]], tag: &Tag) -> bool {
        let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.0).expect("any key length");
        for p in parts {
            m.update(p);
        }
        m.verify_slice(tag).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    BadMac,
    BadSeq,
    AfterFinal,
    Malformed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadMac => "bad_mac",
            RejectReason::BadSeq => "bad_seq",
            RejectReason::AfterFinal => "after_final",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("authentication failed: {0}")]
    Auth(RejectReason),
    #[error("key must be 32 bytes or 64 hex digits")]
    BadKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    AuthenticAndValid,
    /// Index of the first transfer without a CFG edge.
    AuthenticButInvalidPath(usize),
    AuthFailure(RejectReason),
    Incomplete,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::AuthenticAndValid => f.write_str("authentic_and_valid"),
            Verdict::AuthenticButInvalidPath(i) => write!(f, "authentic_but_invalid_path({i})"),
            Verdict::AuthFailure(r) => write!(f, "auth_failure({r})"),
            Verdict::Incomplete => f.write_str("incomplete"),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RejectReason> {
        let s = self.bytes.get(self.at..self.at + n).ok_or(RejectReason::Malformed)?;
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, RejectReason> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, RejectReason> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], RejectReason> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn finish(&self) -> Result<(), RejectReason> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(RejectReason::Malformed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub chal: Chal,
    pub mode: Mode,
    pub width: AddrWidth,
    pub retry_on_mismatch: bool,
    pub slice_size_bytes: u32,
    pub min_code_addr: u32,
    pub blockmem: Vec<u8>,
    pub mac: Tag,
}

impl Request {
    fn body(&self) -> Vec<u8> {
        let mut b = vec![TAG_REQUEST];
        b.extend_from_slice(&self.chal);
        b.push(match self.mode {
            Mode::Pair => 0,
            Mode::Dest => 1,
        });
        b.push(self.width.bits() as u8);
        b.push(self.retry_on_mismatch as u8);
        b.extend_from_slice(&self.slice_size_bytes.to_le_bytes());
        b.extend_from_slice(&self.min_code_addr.to_le_bytes());
        b.extend_from_slice(&(self.blockmem.len() as u32).to_le_bytes());
        b.extend_from_slice(&self.blockmem);
        b
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = self.body();
        b.extend_from_slice(&self.mac);
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RejectReason> {
        let mut r = Reader { bytes, at: 0 };
        if r.u8()? != TAG_REQUEST {
            return Err(RejectReason::Malformed);
        }
        let chal = r.array()?;
        let mode = match r.u8()? {
            0 => Mode::Pair,
            1 => Mode::Dest,
            _ => return Err(RejectReason::Malformed),
        };
        let width = AddrWidth::from_bits(r.u8()? as u32).map_err(|_| RejectReason::Malformed)?;
        let retry_on_mismatch = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(RejectReason::Malformed),
        };
        let slice_size_bytes = r.u32()?;
        let min_code_addr = r.u32()?;
        let n = r.u32()? as usize;
        let blockmem = r.take(n)?.to_vec();
        let mac = r.array()?;
        r.finish()?;
        Ok(Request { chal, mode, width, retry_on_mismatch, slice_size_bytes, min_code_addr, blockmem, mac })
    }

    /// Engine configuration the prover runs under; fields not carried by
    /// the request take their defaults.
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            mode: self.mode,
            width: self.width,
            retry_on_mismatch: self.retry_on_mismatch,
            slice_size_bytes: self.slice_size_bytes as usize,
            min_code_addr: Address(self.min_code_addr),
            ..EngineConfig::default()
        }
    }
}

pub fn make_request(
    key: &Key,
    chal: Chal,
    specs: &[SubPathSpec],
    config: &EngineConfig,
) -> Result<Request, ProtocolError> {
    config.validate()?;
    let image = serialize_blockmem(specs, config)?;
    let mut req = Request {
        chal,
        mode: config.mode,
        width: config.width,
        retry_on_mismatch: config.retry_on_mismatch,
        slice_size_bytes: config.slice_size_bytes as u32,
        min_code_addr: config.min_code_addr.0,
        blockmem: image.bytes,
        mac: [0; MAC_LEN],
    };
    req.mac = key.mac(&[&req.body()]);
    Ok(req)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSlice {
    pub seq: u32,
    pub is_final: bool,
    /// Program image digest, carried by the final slice only.
    pub image_digest: Option<Digest>,
    /// Slice log in memory-image encoding.
    pub payload: Vec<u8>,
    pub mac: Tag,
}

impl EvidenceSlice {
    fn body(&self) -> Vec<u8> {
        let mut b = vec![TAG_SLICE];
        b.extend_from_slice(&self.seq.to_le_bytes());
        b.push(self.is_final as u8);
        if self.is_final {
            b.extend_from_slice(&self.image_digest.unwrap_or([0; DIGEST_LEN]));
        }
        b.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        b.extend_from_slice(&self.payload);
        b
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = self.body();
        b.extend_from_slice(&self.mac);
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RejectReason> {
        let mut r = Reader { bytes, at: 0 };
        if r.u8()? != TAG_SLICE {
            return Err(RejectReason::Malformed);
        }
        let seq = r.u32()?;
        let is_final = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(RejectReason::Malformed),
        };
        let image_digest = if is_final { Some(r.array()?) } else { None };
        let n = r.u32()? as usize;
        let payload = r.take(n)?.to_vec();
        let mac = r.array()?;
        r.finish()?;
        Ok(EvidenceSlice { seq, is_final, image_digest, payload, mac })
    }

    fn sign(mut self, key: &Key, chal: &Chal) -> Self {
        self.mac = key.mac(&[chal, &self.body()]);
        self
    }
}

pub fn frame(body: &[u8]) -> Vec<u8> {
    let mut f = (body.len() as u32).to_le_bytes().to_vec();
    f.extend_from_slice(body);
    f
}

pub fn unframe(frame: &[u8]) -> Result<&[u8], RejectReason> {
    let (len, body) = frame.split_at_checked(4).ok_or(RejectReason::Malformed)?;
    if u32::from_le_bytes(len.try_into().unwrap()) as usize != body.len() {
        return Err(RejectReason::Malformed);
    }
    Ok(body)
}

/// Device side. Installed sub-paths persist across requests; a request
/// with an empty block memory keeps the current installation.
#[derive(Debug)]
pub struct Prover {
    key: Key,
    specs: Vec<SubPathSpec>,
    session: Option<(Chal, EngineConfig)>,
}

impl Prover {
    pub fn new(key: Key) -> Self {
        Prover { key, specs: Vec::new(), session: None }
    }

    pub fn installed(&self) -> &[SubPathSpec] {
        &self.specs
    }

    /// Verifies and applies a request. Nothing changes on failure.
    pub fn handle_request(&mut self, request: &Request) -> Result<(), ProtocolError> {
        if !self.key.verify(&[&request.body()], &request.mac) {
            return Err(ProtocolError::Auth(RejectReason::BadMac));
        }
        let config = request.engine_config();
        config.validate()?;
        if request.blockmem.len() > config.blockmem_capacity_bytes {
            return Err(ModelError::CapacityExceeded {
                needed: request.blockmem.len(),
                capacity: config.blockmem_capacity_bytes,
            }
            .into());
        }
        if !request.blockmem.is_empty() {
            let specs = deserialize_blockmem(&request.blockmem, &config)?;
            if specs.len() > config.max_sub_paths {
                return Err(EngineError::TooManySpecs { got: specs.len(), max: config.max_sub_paths }.into());
            }
            self.specs = specs;
        }
        self.session = Some((request.chal, config));
        Ok(())
    }

    pub fn handle_request_bytes(&mut self, bytes: &[u8]) -> Result<(), ProtocolError> {
        let req = Request::decode(bytes).map_err(ProtocolError::Auth)?;
        self.handle_request(&req)
    }

    /// Runs the trace, handing each authenticated slice to `emit` as soon
    /// as it is cut. The last slice is final and carries `image_digest`.
    pub fn stream(
        &mut self,
        trace: &[Transfer],
        image_digest: Digest,
        mut emit: impl FnMut(EvidenceSlice),
    ) -> Result<usize, ProtocolError> {
        let (chal, config) = self.session.clone().ok_or(ProtocolError::Auth(RejectReason::BadSeq))?;
        let mut compressor = SliceCompressor::new(self.specs.clone(), config.clone())?;
        let mut seq = 0u32;
        let mut seal = |log: &CfLog, is_final: bool, seq: &mut u32| -> Result<(), ProtocolError> {
            let payload = serialize_log(log, &config, LogFormat::MemoryImage)?;
            let slice = EvidenceSlice {
                seq: *seq,
                is_final,
                image_digest: is_final.then_some(image_digest),
                payload,
                mac: [0; MAC_LEN],
            };
            emit(slice.sign(&self.key, &chal));
            *seq += 1;
            Ok(())
        };
        for &t in trace {
            if let Some(done) = compressor.push(t)? {
                seal(&done, false, &mut seq)?;
            }
        }
        let (last, _) = compressor.finish();
        seal(&last.unwrap_or_else(|| CfLog::new(config.width)), true, &mut seq)?;
        self.session = None;
        Ok(seq as usize)
    }

    pub fn run(&mut self, trace: &[Transfer], image_digest: Digest) -> Result<Vec<EvidenceSlice>, ProtocolError> {
        let mut out = Vec::new();
        self.stream(trace, image_digest, |s| out.push(s))?;
        Ok(out)
    }
}

/// Outcome of assembling a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub verdict: Verdict,
    /// Expanded log, present when every slice authenticated.
    pub raw: Option<RawLog>,
    pub image_digest: Option<Digest>,
}

/// Verifier side of one attestation session.
#[derive(Debug)]
pub struct Verifier {
    key: Key,
    chal: Chal,
    specs: Vec<SubPathSpec>,
    config: EngineConfig,
    next_seq: u32,
    payloads: Vec<Vec<u8>>,
    image_digest: Option<Digest>,
    finalized: bool,
    first_reject: Option<RejectReason>,
}

impl Verifier {
    pub fn new(key: Key, chal: Chal, specs: Vec<SubPathSpec>, config: EngineConfig) -> Self {
        Verifier {
            key,
            chal,
            specs,
            config,
            next_seq: 0,
            payloads: Vec::new(),
            image_digest: None,
            finalized: false,
            first_reject: None,
        }
    }

    pub fn request(&self) -> Result<Request, ProtocolError> {
        make_request(&self.key, self.chal, &self.specs, &self.config)
    }

    pub fn accepted(&self) -> usize {
        self.payloads.len()
    }

    pub fn first_reject(&self) -> Option<RejectReason> {
        self.first_reject
    }

    fn check(&self, slice: &EvidenceSlice) -> Result<(), RejectReason> {
        if !self.key.verify(&[&self.chal, &slice.body()], &slice.mac) {
            return Err(RejectReason::BadMac);
        }
        if self.finalized {
            return Err(RejectReason::AfterFinal);
        }
        if slice.seq != self.next_seq {
            return Err(RejectReason::BadSeq);
        }
        Ok(())
    }

    /// Accepts iff the MAC verifies, the session is open and `seq` is the
    /// expected one. State advances only on accept.
    pub fn verify_slice(&mut self, slice: &EvidenceSlice) -> Result<(), RejectReason> {
        match self.check(slice) {
            Ok(()) => {
                self.payloads.push(slice.payload.clone());
                self.next_seq += 1;
                if slice.is_final {
                    self.finalized = true;
                    self.image_digest = slice.image_digest;
                }
                Ok(())
            }
            Err(r) => {
                self.first_reject.get_or_insert(r);
                Err(r)
            }
        }
    }

    pub fn receive_frame(&mut self, bytes: &[u8]) -> Result<(), RejectReason> {
        match unframe(bytes).and_then(EvidenceSlice::decode) {
            Ok(slice) => self.verify_slice(&slice),
            Err(r) => {
                self.first_reject.get_or_insert(r);
                Err(r)
            }
        }
    }

    /// Any rejected slice fails the session with the first reason. A
    /// session without its final slice is incomplete. Otherwise the slices
    /// are decoded, expanded, concatenated and, if `cfg` is given,
    /// checked edge by edge.
    pub fn assemble(&self, cfg: Option<&Cfg>) -> Result<Assembly, ProtocolError> {
        if let Some(r) = self.first_reject {
            return Ok(Assembly { verdict: Verdict::AuthFailure(r), raw: None, image_digest: None });
        }
        if !self.finalized {
            return Ok(Assembly { verdict: Verdict::Incomplete, raw: None, image_digest: None });
        }
        let mut raw = CfLog::new(self.config.width);
        for p in &self.payloads {
            let log = deserialize_log(p, &self.config, LogFormat::MemoryImage)?;
            raw.extend_from(&expand(&log, &self.specs)?);
        }
        let verdict = match cfg.map(|c| validate_against_cfg(&raw, c)) {
            Some(Err(i)) => Verdict::AuthenticButInvalidPath(i),
            _ => Verdict::AuthenticAndValid,
        };
        Ok(Assembly { verdict, raw: Some(raw), image_digest: self.image_digest })
    }
}

/// Pair mode: each transfer must equal the transfer of some CFG edge.
/// Dest mode: the first destination must start an edge target, and each
/// later one needs an edge from the block starting at the previous one.
pub fn validate_against_cfg(raw: &RawLog, cfg: &Cfg) -> Result<(), usize> {
    let elems = raw.elements();
    if elems.iter().any(|e| matches!(e, LogElement::RawDest(_))) {
        let starts: HashSet<(u32, u32)> =
            cfg.edges().iter().map(|e| (cfg.block(e.from).start.0, cfg.block(e.to).start.0)).collect();
        let targets: HashSet<u32> = starts.iter().map(|&(_, t)| t).collect();
        let mut prev = None;
        for (i, e) in elems.iter().enumerate() {
            let LogElement::RawDest(d) = e else { return Err(i) };
            let ok = match prev {
                None => targets.contains(&d.0),
                Some(p) => starts.contains(&(p, d.0)),
            };
            if !ok {
                return Err(i);
            }
            prev = Some(d.0);
        }
        return Ok(());
    }
    let edges = cfg.transfer_set();
    for (i, e) in elems.iter().enumerate() {
        match e {
            LogElement::RawPair(t) if edges.contains(t) => {}
            _ => return Err(i),
        }
    }
    Ok(())
}

/// Per-slice fault injection keyed by slice index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Faults {
    pub drop: BTreeSet<u32>,
    pub flip: BTreeSet<u32>,
    pub replay: BTreeSet<u32>,
    /// Each listed slice is held back and delivered after the next one.
    pub reorder: BTreeSet<u32>,
}

/// Flips one bit of a frame; `bit` counts from the first byte's LSB.
pub fn flip_bit(frame: &mut [u8], bit: usize) {
    frame[bit / 8] ^= 1 << (bit % 8);
}

/// Sending half of an in-process ordered channel that applies [`Faults`].
pub struct FaultyLink {
    tx: mpsc::Sender<Vec<u8>>,
    faults: Faults,
    index: u32,
    held: Option<Vec<u8>>,
}

pub fn link(faults: Faults) -> (FaultyLink, mpsc::Receiver<Vec<u8>>) {
    let (tx, rx) = mpsc::channel();
    (FaultyLink { tx, faults, index: 0, held: None }, rx)
}

impl FaultyLink {
    pub fn send(&mut self, mut frame: Vec<u8>) {
        let i = self.index;
        self.index += 1;
        if self.faults.drop.contains(&i) {
            return;
        }
        if self.faults.flip.contains(&i) {
            // a payload-region bit past the length prefix
            let bit = 8 * (4 + (frame.len() - 4) / 2);
            flip_bit(&mut frame, bit);
        }
        let copies = if self.faults.replay.contains(&i) { 2 } else { 1 };
        if self.faults.reorder.contains(&i) && self.held.is_none() {
            self.held = Some(frame);
            return;
        }
        for _ in 0..copies {
            let _ = self.tx.send(frame.clone());
        }
        if let Some(h) = self.held.take() {
            let _ = self.tx.send(h);
        }
    }

    /// Delivers any held frame and closes the channel.
    pub fn close(mut self) {
        if let Some(h) = self.held.take() {
            let _ = self.tx.send(h);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub assembly: Assembly,
    /// Slices the prover produced.
    pub slice_count: usize,
    pub payload_bytes: usize,
    pub rejects: Vec<RejectReason>,
}

/// One full session: request, installation, prover streaming over a
/// faulty link on its own thread, verifier assembly.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    key: &Key,
    chal: Chal,
    specs: &[SubPathSpec],
    config: &EngineConfig,
    trace: &[Transfer],
    image_digest: Digest,
    faults: Faults,
    cfg: Option<&Cfg>,
) -> Result<SessionReport, ProtocolError> {
    let mut verifier = Verifier::new(key.clone(), chal, specs.to_vec(), config.clone());
    let request = verifier.request()?;
    let mut prover = Prover::new(key.clone());
    prover.handle_request_bytes(&request.encode())?;
    let (mut tx, rx) = link(faults);
    let (produced, payload_bytes, rejects) = std::thread::scope(|s| {
        let worker = s.spawn(move || {
            let mut bytes = 0;
            let n = prover.stream(trace, image_digest, |slice| {
                bytes += slice.payload.len();
                tx.send(frame(&slice.encode()));
            });
            tx.close();
            n.map(|n| (n, bytes))
        });
        let mut rejects = Vec::new();
        for f in rx {
            if let Err(r) = verifier.receive_frame(&f) {
                rejects.push(r);
            }
        }
        worker.join().expect("prover thread").map(|(n, b)| (n, b, rejects))
    })?;
    Ok(SessionReport { assembly: verifier.assemble(cfg)?, slice_count: produced, payload_bytes, rejects })
}
