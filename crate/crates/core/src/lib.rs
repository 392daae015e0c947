//! Power flow insolvability certificates from a semidefinite relaxation.
//!
//! A dual semidefinite program bounds from below the slack voltage needed
//! to deliver a set of power injections. When the bound exceeds the actual
//! slack voltage, the power flow equations have no solution. The same bound
//! yields a controlled-voltage margin `σ` and an injection margin `η = σ²`.
//!
//! Around the certificate sit the pieces needed to check it: a network
//! model and case-file reader, Newton-Raphson power flow, continuation power
//! flow for PV curves, and a dense log-det barrier SDP solver.
//!
//! ```no_run
//! use gridcert::caseio::load_case;
//! use gridcert::sdpcert::certify;
//!
//! let model = load_case("ieee14")?.scale_injections(5.0)?;
//! let cert = certify(&model)?;
//! assert!(cert.insolvable_certified);
//! println!("sigma = {:.4}, eta = {:.4}", cert.sigma, cert.eta);
//! # Ok::<(), gridcert::Error>(())
//! ```
//!
//! The `examples/` directory has one runnable program per capability.

pub mod caseio;
pub mod cli;
pub mod continuation;
pub mod linalg;
pub mod netmodel;
pub mod powerflow;
pub mod report;
pub mod sdpcert;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] caseio::CaseError),
    #[error(transparent)]
    Network(#[from] netmodel::NetworkError),
    #[error(transparent)]
    PowerFlow(#[from] powerflow::PowerFlowError),
    #[error(transparent)]
    Sdp(#[from] sdpcert::SdpError),
    #[error(transparent)]
    Continuation(#[from] continuation::ContinuationError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}
