//! Prompting schemes for wireless-network tasks with offline-verifiable
//! mock LLM loops, plus the conventional learners they are compared to.
//!
//! The crate is organized around seven subsystems:
//!
//! - [`netsim`]: deterministic multi-cell downlink power-control environment
//! - [`llm`]: provider-agnostic chat client with scripted mock and record/replay
//! - [`nn`]: from-scratch MLP/LSTM toolkit with gradient checking
//! - [`agents`]: iterative prompting loop and a deep Q-learning baseline
//! - [`tspredict`]: self-refined prompting pipeline for traffic prediction
//! - [`baselines`]: ARIMA, LSTM and seasonal-naive forecasters
//! - [`harness`]: metrics, run logs and report emission

pub mod agents;
pub mod baselines;
pub mod harness;
pub mod llm;
pub mod netsim;
pub mod nn;
pub mod tspredict;
