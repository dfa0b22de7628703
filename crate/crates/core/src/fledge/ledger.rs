use serde::{Deserialize, Serialize};

/// Cost of one round (round 0 is initialisation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCost {
    pub round: usize,
    pub vectors_sent: u64,
    pub grad_calls: u64,
}

/// Communication and computation totals.
///
/// One vector is one `d`-dimensional array sent over the wire; sending the
/// same array to `k` recipients counts `k`. Scalars and indices are free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: usize,
    pub vectors_sent: u64,
    pub grad_calls: u64,
    pub per_round: Vec<RoundCost>,
}

impl CommLedger {
    pub(crate) fn charge(&mut self, round: usize, vectors_sent: u64, grad_calls: u64) {
        self.rounds = round;
        self.vectors_sent += vectors_sent;
        self.grad_calls += grad_calls;
        self.per_round.push(RoundCost { round, vectors_sent, grad_calls });
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
