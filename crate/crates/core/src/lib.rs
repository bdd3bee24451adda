//! Desk-scale simulation of forged-origin BGP hijack detection and the
//! adversarial attacks that defeat it: knowledge-base poisoning against a
//! DFOH-style classifier, dynamic-threshold pollution against a BEAM-style
//! embedding detector, and the private-monitor countermeasure.

pub mod topology;
pub mod routing;
pub mod dfoh;
pub mod beam;
pub mod attacks;
pub mod countermeasures;
pub mod harness;

pub use topology::{asn, AsGraph, AsMetadata, Asn, Prefix, Relationship};
pub use routing::{Announcement, RibSnapshot, RoaTable, RouteEvent};
