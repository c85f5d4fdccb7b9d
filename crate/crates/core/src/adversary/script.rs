use serde::{Deserialize, Serialize};

use crate::model::{CellValue, RegId, SeqTuple, Value};
use crate::sim::{BoxFut, Ctx};

/// One recorded register access.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "a", rename_all = "snake_case")]
pub enum Action {
    Read { reg: RegId },
    Write { reg: RegId, value: CellValue },
}

/// Behavior of a malicious process, expressed as raw register accesses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryScript {
    /// Writes its initial value back into every register the process owns, in id order.
    ResetAll,
    LieValue {
        reg: RegId,
        value: CellValue,
    },
    /// Re-issues recorded accesses verbatim; read results are ignored.
    Replay {
        actions: Vec<Action>,
    },
    Sequence {
        scripts: Vec<AdversaryScript>,
    },
    Idle,
    /// Copies whatever `from` holds into `to`.
    Forward {
        from: RegId,
        to: RegId,
    },
    /// Signs `<k,u>` with the process's own key and writes it.
    SignedLie {
        reg: RegId,
        k: u64,
        u: Value,
    },
}

impl AdversaryScript {
    pub fn seq(scripts: Vec<AdversaryScript>) -> AdversaryScript {
        AdversaryScript::Sequence { scripts }
    }
}

pub fn run(script: AdversaryScript, ctx: Ctx) -> BoxFut<()> {
    Box::pin(async move {
        match script {
            AdversaryScript::Idle => {}
            AdversaryScript::ResetAll => {
                for spec in ctx.writable_registers() {
                    ctx.write(&spec.id, spec.initial.clone()).await;
                }
            }
            AdversaryScript::LieValue { reg, value } => ctx.write(&reg, value).await,
            AdversaryScript::Replay { actions } => {
                for a in actions {
                    match a {
                        Action::Read { reg } => {
                            ctx.read(&reg).await;
                        }
                        Action::Write { reg, value } => ctx.write(&reg, value).await,
                    }
                }
            }
            AdversaryScript::Sequence { scripts } => {
                for s in scripts {
                    run(s, ctx.clone()).await;
                }
            }
            AdversaryScript::Forward { from, to } => {
                let v = ctx.read(&from).await;
                ctx.write(&to, v).await;
            }
            AdversaryScript::SignedLie { reg, k, u } => {
                let s = ctx.sign(SeqTuple::new(k, u));
                ctx.write(&reg, CellValue::Signed(s)).await;
            }
        }
    })
}
