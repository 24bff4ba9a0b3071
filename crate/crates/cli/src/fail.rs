//! Exit-code policy: 0 success, 1 usage/input error, 2 domain failure,
//! 3 service failure.

use gerkit::corpus::CorpusError;
use gerkit::databuild::BuildError;
use gerkit::ger::GerError;
use gerkit::phonetics::PhoneticsError;
use gerkit::report::ReportError;
use gerkit::services::ServiceError;

pub struct CmdFail {
    pub code: i32,
    pub err: anyhow::Error,
}

impl CmdFail {
    pub fn usage(err: anyhow::Error) -> Self {
        CmdFail { code: 1, err }
    }

    pub fn usage_from<E: std::error::Error + Send + Sync + 'static>(err: E) -> Self {
        CmdFail { code: 1, err: anyhow::Error::new(err) }
    }
}

/// Classify a core error by walking its chain: service failures win, then
/// domain failures, else usage/input.
pub fn classify<E: std::error::Error + Send + Sync + 'static>(err: E) -> CmdFail {
    let err = anyhow::Error::new(err);
    let mut code = 1;
    for cause in err.chain() {
        if cause.downcast_ref::<ServiceError>().is_some() {
            code = 3;
            break;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            match e {
                CorpusError::CoverageInfeasible { .. }
                | CorpusError::EmptyList
                | CorpusError::LlmParse { .. } => {
                    code = 2;
                    break;
                }
                CorpusError::Service(_) => continue,
                _ => break,
            }
        }
        if let Some(e) = cause.downcast_ref::<GerError>() {
            match e {
                GerError::MissingHypotheses { .. } => {
                    code = 2;
                    break;
                }
                GerError::Service { .. } | GerError::Phonetics { .. } => continue,
                _ => break,
            }
        }
        if let Some(e) = cause.downcast_ref::<BuildError>() {
            match e {
                BuildError::EmptyExamples => {
                    code = 2;
                    break;
                }
                BuildError::Service { .. } | BuildError::Phonetics { .. } => continue,
                _ => break,
            }
        }
        if let Some(e) = cause.downcast_ref::<ReportError>() {
            match e {
                ReportError::Alignment(_) => {
                    code = 2;
                    break;
                }
                ReportError::Ger(_) | ReportError::Build(_) => continue,
                _ => break,
            }
        }
        if let Some(e) = cause.downcast_ref::<PhoneticsError>() {
            match e {
                PhoneticsError::EmptyConversion { .. } => {
                    code = 2;
                    break;
                }
                PhoneticsError::Service(_) => continue,
                _ => break,
            }
        }
    }
    CmdFail { code, err }
}
