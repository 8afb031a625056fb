// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::filters::ScenarioName;
use crate::types::Asn;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file could not be understood.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("AS {0} is not part of the topology")]
    UnknownAs(Asn),

    /// The provider-to-customer subgraph contains a cycle; cones are undefined.
    #[error("provider-to-customer cycle through AS {0}")]
    ProviderCycle(Asn),

    #[error("clique member AS {0} has a provider")]
    CliqueMemberHasProvider(Asn),

    #[error("routing did not converge within {0} rounds")]
    Divergence(usize),

    #[error("unknown protection scenario {0:?}")]
    UnknownScenario(String),

    #[error("scenario {0} requires a Peerlock rule file")]
    MissingRules(ScenarioName),

    #[error("invalid Peerlock rule: {0}")]
    InvalidRule(String),

    #[error("leaker AS {leaker} does not appear on path")]
    LeakerNotOnPath { leaker: Asn },

    #[error("no relationship between AS {0} and AS {1}")]
    MissingLink(Asn, Asn),

    /// A provider-to-customer hop was found after the segment started climbing.
    #[error("provider-to-customer hop inside leak segment at AS {0}")]
    DownStepInSegment(Asn),

    #[error("sentinel AS {0} must not exist in the topology or in any filter rule")]
    InvalidSentinel(Asn),

    #[error("AS {0} has no route to the leak destination")]
    NoRoute(Asn),

    /// Malformed or incompatible report file.
    #[error("report format: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
