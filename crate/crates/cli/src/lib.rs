// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: run files, HTTP services and live sessions.

pub mod config;
pub mod http;
pub mod live;
pub mod remote;
