use serde::{Deserialize, Serialize};

use super::{ProcessId, SeqTuple};

/// Opaque tag issued by the [`SignatureOracle`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u64);

/// A tuple together with the process that claims to have signed it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub tuple: SeqTuple,
    pub signer: ProcessId,
    pub token: Token,
}

/// Table of issued tokens. A token verifies only for the exact tuple and
/// signer it was issued for; nothing else can mint one.
#[derive(Clone, Debug, Default)]
pub struct SignatureOracle {
    issued: Vec<(SeqTuple, ProcessId)>,
}

impl SignatureOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sign(&mut self, tuple: SeqTuple, signer: ProcessId) -> Signature {
        let token = Token(self.issued.len() as u64);
        self.issued.push((tuple.clone(), signer));
        Signature { tuple, signer, token }
    }

    pub fn verify(&self, s: &Signature, expected_signer: ProcessId) -> bool {
        s.signer == expected_signer
            && self.issued.get(s.token.0 as usize).is_some_and(|(t, p)| *p == expected_signer && *t == s.tuple)
    }

    pub fn issued(&self) -> usize {
        self.issued.len()
    }

    pub fn binding(&self, token: Token) -> Option<&(SeqTuple, ProcessId)> {
        self.issued.get(token.0 as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Value;

    #[test]
    fn sign_verify_cases() {
        let mut o = SignatureOracle::new();
        let w = ProcessId::WRITER;
        let q = ProcessId(2);
        let t = SeqTuple::new(1, Value::text("a"));
        let s = o.sign(t.clone(), w);
        assert!(o.verify(&s, w));
        let sq = o.sign(t.clone(), q);
        assert!(!o.verify(&sq, w));
        let mut altered = s.clone();
        altered.tuple.k = 2;
        assert!(!o.verify(&altered, w));
        let mut relabeled = sq;
        relabeled.signer = w;
        assert!(!o.verify(&relabeled, w));
        let unissued = Signature { tuple: t, signer: w, token: Token(99) };
        assert!(!o.verify(&unissued, w));
    }
}
