// SPDX-License-Identifier: Apache-2.0

//! HTTP gateway and command-line front end for the loopbench control loop.

pub mod api;
pub mod writer;
