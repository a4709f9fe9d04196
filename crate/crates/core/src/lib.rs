//! Core of the symbiotic inspection-robot stack: reliability ontology and
//! reasoner, platform simulator, FMCW scan analysis, mission executor,
//! digital-twin hub and the headless scenario runner.

pub mod canonical;
pub mod fmcw;
pub mod mission;
pub mod ontology;
pub mod reasoner;
pub mod scenario;
pub mod sim;
pub mod twin;
