//! Domain types shared by every layer: processes, sequence-numbered tuples,
//! register cell contents, register declarations and fault models.

mod signature;
mod substrate;

pub use signature::{Signature, SignatureOracle, Token};
pub use substrate::{Substrate, SubstrateError};

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adversary::AdversaryScript;

/// A process of the simulated system. Process `0` is always the writer of
/// the implemented register; readers are `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub const WRITER: ProcessId = ProcessId(0);

    pub fn reader(i: u32) -> ProcessId {
        debug_assert!(i >= 1);
        ProcessId(i)
    }

    pub fn role(self) -> Role {
        if self == Self::WRITER {
            Role::Writer
        } else {
            Role::Reader
        }
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::WRITER {
            write!(f, "w")
        } else {
            write!(f, "r{}", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Writer,
    Reader,
}

/// Payload carried by a tuple. Top-level registers store opaque bytes; a
/// register implemented by a nested instance stores the outer cell value
/// it carries.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bytes(Vec<u8>),
    Cell(Box<CellValue>),
}

impl Value {
    pub fn empty() -> Value {
        Value::Bytes(Vec::new())
    }

    pub fn text(s: &str) -> Value {
        Value::Bytes(s.as_bytes().to_vec())
    }

    pub fn cell(c: CellValue) -> Value {
        Value::Cell(Box::new(c))
    }

    pub fn as_cell(&self) -> Option<&CellValue> {
        match self {
            Value::Cell(c) => Some(c),
            Value::Bytes(_) => None,
        }
    }
}

impl Default for Value {
    fn default() -> Self {
        Value::empty()
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bytes(b) => match std::str::from_utf8(b) {
                Ok(s) => write!(f, "{s:?}"),
                Err(_) => write!(f, "0x{}", hex::encode(b)),
            },
            Value::Cell(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValueRepr {
    Text(String),
    Hex(HexRepr),
    Cell(Box<CellValue>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HexRepr {
    hex: String,
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Value::Bytes(b) => match std::str::from_utf8(b) {
                Ok(text) => ValueRepr::Text(text.to_owned()),
                Err(_) => ValueRepr::Hex(HexRepr { hex: hex::encode(b) }),
            },
            Value::Cell(c) => ValueRepr::Cell(c.clone()),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match ValueRepr::deserialize(d)? {
            ValueRepr::Text(s) => Value::Bytes(s.into_bytes()),
            ValueRepr::Hex(h) => Value::Bytes(hex::decode(&h.hex).map_err(serde::de::Error::custom)?),
            ValueRepr::Cell(c) => Value::Cell(c),
        })
    }
}

/// A sequence-numbered value `<k, u>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeqTuple {
    pub k: u64,
    pub u: Value,
}

impl SeqTuple {
    pub fn new(k: u64, u: Value) -> SeqTuple {
        SeqTuple { k, u }
    }

    pub fn initial(u0: &Value) -> SeqTuple {
        SeqTuple { k: 0, u: u0.clone() }
    }
}

impl fmt::Display for SeqTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.k, self.u)
    }
}

/// Contents of one atomic register cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum CellValue {
    Commit(SeqTuple),
    Prepare {
        prev: SeqTuple,
        next: SeqTuple,
    },
    Plain(SeqTuple),
    Signed(Signature),
    Bottom,
    Garbage {
        #[serde(with = "hex_bytes")]
        bytes: Vec<u8>,
    },
}

impl CellValue {
    pub fn prepare(prev: SeqTuple, next: SeqTuple) -> CellValue {
        CellValue::Prepare { prev, next }
    }

    pub fn garbage(bytes: &[u8]) -> CellValue {
        CellValue::Garbage { bytes: bytes.to_vec() }
    }

    /// Every signature token embedded in this value, including nested payloads.
    pub fn tokens(&self, out: &mut Vec<Token>) {
        fn visit(t: &SeqTuple, out: &mut Vec<Token>) {
            if let Value::Cell(c) = &t.u {
                c.tokens(out);
            }
        }
        match self {
            CellValue::Commit(t) | CellValue::Plain(t) => visit(t, out),
            CellValue::Prepare { prev, next } => {
                visit(prev, out);
                visit(next, out);
            }
            CellValue::Signed(s) => {
                out.push(s.token);
                visit(&s.tuple, out);
            }
            CellValue::Bottom | CellValue::Garbage { .. } => {}
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Commit(t) => write!(f, "(commit,{t})"),
            CellValue::Prepare { prev, next } => write!(f, "(prepare,{prev},{next})"),
            CellValue::Plain(t) => write!(f, "{t}"),
            CellValue::Signed(s) => write!(f, "{}_{}#{}", s.tuple, s.signer, s.token.0),
            CellValue::Bottom => write!(f, "⊥"),
            CellValue::Garbage { bytes } => write!(f, "garbage(0x{})", hex::encode(bytes)),
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Hierarchical register path, e.g. `I3/RwQ/I2/Rwp`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegId(Arc<str>);

impl RegId {
    pub fn new(path: impl AsRef<str>) -> RegId {
        RegId(Arc::from(path.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for RegId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for RegId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(RegId::new(String::deserialize(d)?))
    }
}

/// Declaration of one atomic single-writer register.
///
/// A register whose only reader is its own writer is a loopback cell: it
/// stands for a process-local variable that the algorithms still access as
/// a register, so each access is counted as a step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub id: RegId,
    pub writer: ProcessId,
    pub readers: BTreeSet<ProcessId>,
    pub initial: CellValue,
}

impl RegisterSpec {
    pub fn new(
        id: RegId,
        writer: ProcessId,
        readers: impl IntoIterator<Item = ProcessId>,
        initial: CellValue,
    ) -> RegisterSpec {
        RegisterSpec { id, writer, readers: readers.into_iter().collect(), initial }
    }

    pub fn is_loopback(&self) -> bool {
        self.readers.len() == 1 && self.readers.contains(&self.writer)
    }

    pub fn readable_by(&self, p: ProcessId) -> bool {
        self.readers.contains(&p)
    }
}

/// How a process behaves in a scenario.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultModel {
    #[default]
    Correct,
    /// Takes no resumption starting at or after the given global step.
    Crash {
        at_step: u64,
    },
    /// Crashes right after its `own_steps`-th register access.
    CrashAfter {
        own_steps: u64,
    },
    Malicious {
        script: AdversaryScript,
    },
}

impl FaultModel {
    pub fn is_malicious(&self) -> bool {
        matches!(self, FaultModel::Malicious { .. })
    }

    pub fn is_correct(&self) -> bool {
        matches!(self, FaultModel::Correct)
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, FaultModel::Crash { .. } | FaultModel::CrashAfter { .. })
    }
}
