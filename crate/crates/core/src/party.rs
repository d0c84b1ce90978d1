//! A data-holding participant: its feature block, optional labels, and the per-algorithm
//! state its phase handlers mutate.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::data::PartyTable;
use crate::error::{Error, Result};
use crate::forest::party::ForestPartyState;
use crate::kernel::party::KernelPartyState;
use crate::phase::{PhaseRegistry, Service};
use crate::transport::LoopbackTransport;
use crate::{forest, kernel};

/// Name the coordinator uses as sender.
pub const MASTER: &str = "master";

pub struct Party {
    table: PartyTable,
    model_dir: Option<PathBuf>,
    pub(crate) kernel: Option<KernelPartyState>,
    pub(crate) forest: Option<ForestPartyState>,
}

impl Party {
    /// The party is named after its table. `model_dir` receives trained model fragments.
    pub fn new(table: PartyTable, model_dir: Option<PathBuf>) -> Self {
        Self {
            table,
            model_dir,
            kernel: None,
            forest: None,
        }
    }

    pub fn name(&self) -> &str {
        self.table.name()
    }

    pub fn table(&self) -> &PartyTable {
        &self.table
    }

    /// The party holding labels.
    pub fn is_active(&self) -> bool {
        self.table.labels().is_some()
    }

    pub fn model_dir(&self) -> Option<&Path> {
        self.model_dir.as_deref()
    }

    pub fn kernel_state(&self) -> Option<&KernelPartyState> {
        self.kernel.as_ref()
    }

    pub fn forest_state(&self) -> Option<&ForestPartyState> {
        self.forest.as_ref()
    }

    pub(crate) fn labels(&self) -> Result<&[f64]> {
        self.table
            .labels()
            .ok_or_else(|| Error::Protocol(format!("{} holds no labels", self.name())))
    }

    pub(crate) fn rows_of(&self, ids: &[u64]) -> Result<Vec<usize>> {
        self.table
            .rows_of(ids)
            .map_err(|id| Error::Protocol(format!("{} has no sample with id {id}", self.name())))
    }

    /// The table and the forest state, borrowed together.
    pub(crate) fn forest_parts(&mut self) -> Result<(&PartyTable, &mut ForestPartyState)> {
        let name = self.table.name();
        match self.forest.as_mut() {
            Some(st) => Ok((&self.table, st)),
            None => Err(Error::Protocol(format!(
                "{name} has not been set up for forest training"
            ))),
        }
    }

    pub(crate) fn require_model_dir(&self) -> Result<&Path> {
        self.model_dir
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{} has no model directory", self.name())))
    }

    pub fn into_service(self) -> Service<Party> {
        Service::new(self, party_registry())
    }
}

/// Every phase a party answers to.
pub fn party_registry() -> PhaseRegistry<Party> {
    let mut registry = PhaseRegistry::new();
    kernel::party::register(&mut registry).expect("kernel phases are distinct");
    forest::party::register(&mut registry).expect("forest phases are distinct");
    registry
}

pub type SharedParty = Arc<Mutex<Service<Party>>>;

/// Registers every party on a fresh loopback transport and hands back shared handles so
/// callers can inspect party state after a run.
pub fn loopback(parties: Vec<Party>) -> Result<(LoopbackTransport, Vec<SharedParty>)> {
    let mut transport = LoopbackTransport::new();
    let mut handles = Vec::with_capacity(parties.len());
    for party in parties {
        let name = party.name().to_owned();
        let shared = Arc::new(Mutex::new(party.into_service()));
        transport.register_shared(name, Arc::clone(&shared))?;
        handles.push(shared);
    }
    Ok((transport, handles))
}
