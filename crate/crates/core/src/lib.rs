//! Control-flow log compression by verifier-defined sub-path speculation.
//!
//! The prover side streams control-flow transfers through [`engine::Engine`],
//! which replaces occurrences of installed sub-paths by one-word symbols and
//! coalesces repeats. The verifier side chooses sub-paths ([`selection`]),
//! authenticates requests and evidence slices ([`protocol`]) and expands the
//! received log back to the exact raw trace ([`engine::expand`]).

pub mod blockmem;
pub mod cfg;
pub mod codec;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod monitor;
pub mod oracle;
pub mod protocol;
pub mod selection;
pub mod specfile;

pub use blockmem::{deserialize_blockmem, serialize_blockmem, BlockMemImage};
pub use cfg::{build_cfg, find_loops, Cfg, CfgDocument, CfgError};
pub use codec::{deserialize_log, serialize_log, LogFormat};
pub use engine::{compress_trace, expand, slice_compress, Engine, EngineError};
pub use ingest::{generate_trace, parse_trace, write_trace, TraceDocument, WorkloadProfile};
pub use model::{
    encode_raw, AddrWidth, Address, CfLog, CompressedLog, EngineConfig, LogElement, Mode, ModelError, RawLog,
    SubPathSpec, Transfer,
};
pub use monitor::{check_access, run_monitor, Access, AccessEvent, MonitorVerdict, RegionMap};
pub use oracle::{oracle_compress, oracle_slice_compress};
pub use protocol::{image_digest, make_request, run_session, validate_against_cfg, Key, Prover, Verdict, Verifier};
pub use specfile::{parse_spec_set, write_spec_set};
