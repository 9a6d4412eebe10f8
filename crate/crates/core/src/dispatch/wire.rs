//! Newline-delimited JSON messages between master and workers.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::netdesc::ModelDescription;
use crate::sampler::ConfigSample;
use crate::search::{Status, TrialId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Task {
        trial_id: TrialId,
        attempt: u32,
        sample: ConfigSample,
        model_desc: Option<ModelDescription>,
        resource: u64,
        seed: u64,
    },
    Result {
        trial_id: TrialId,
        attempt: u32,
        status: Status,
        metrics: BTreeMap<String, f64>,
        wall_time: f64,
    },
    Heartbeat {
        worker_id: String,
    },
    Shutdown {},
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Message {
    /// One line of JSON without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn decode(line: &str) -> Result<Message, WireError> {
        Ok(serde_json::from_str(line.trim_end_matches(['\r', '\n']))?)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), WireError> {
        writeln!(w, "{}", self.encode())?;
        w.flush()?;
        Ok(())
    }
}

/// Reads the next nonblank line as a message; `None` at end of input.
pub fn read_message(r: &mut impl BufRead) -> Result<Option<Message>, WireError> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            return Message::decode(&line).map(Some);
        }
    }
}
