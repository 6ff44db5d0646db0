#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod linalg;
pub mod lti;
pub mod netgraph;
pub mod protocols;
pub mod sim;
pub mod synthesis;
pub mod verify;
