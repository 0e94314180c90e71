//! Synthetic input files and the Map and Reduce phases.
//!
//! Map and reduce functions are surrogates built from SHA-256:
//!
//! * `v_{q,j} = H("iv" ‖ seed ‖ q ‖ w_j)` expanded in counter mode to `T` bytes,
//! * `u_q = H("reduce" ‖ seed ‖ q ‖ v_{q,1} ‖ … ‖ v_{q,N})`.
//!
//! Any IV that arrives corrupted or out of place changes `u_q`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::design::{Design, FileId, FuncId, NodeId};

/// Identifies `v_{q,j}` as `(q, j)`.
pub type IvId = (FuncId, FileId);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("node {node} is missing IV v[{q},{j}] needed to reduce function {q}")]
    MissingIv { node: NodeId, q: FuncId, j: FileId },
}

/// The input library, `N` files of `B` bytes each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileStore {
    files: Vec<Vec<u8>>,
}

impl FileStore {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Contents of file `id` (1-based).
    pub fn file(&self, id: FileId) -> &[u8] {
        &self.files[id - 1]
    }

    /// Mutable access, for fault-injection tests.
    pub fn file_mut(&mut self, id: FileId) -> &mut Vec<u8> {
        &mut self.files[id - 1]
    }
}

fn expand(prefix: &Sha256, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut counter = 0u64;
    while out.len() < len {
        let block = prefix
            .clone()
            .chain_update(counter.to_le_bytes())
            .finalize();
        let take = (len - out.len()).min(block.len());
        out.extend_from_slice(&block[..take]);
        counter += 1;
    }
    out
}

/// Deterministic contents of file `id` under `seed`.
pub fn file_bytes(seed: u64, id: FileId, len: usize) -> Vec<u8> {
    let prefix = Sha256::new()
        .chain_update(b"file")
        .chain_update(seed.to_le_bytes())
        .chain_update((id as u64).to_le_bytes());
    expand(&prefix, len)
}

pub fn synthesize_files(design: &Design) -> FileStore {
    let spec = design.spec();
    FileStore {
        files: (1..=design.n())
            .into_par_iter()
            .map(|id| file_bytes(spec.seed, id, spec.file_bytes))
            .collect(),
    }
}

/// The surrogate map function `g_{q,j}` applied to `file`.
pub fn map_value(seed: u64, q: FuncId, file: &[u8], iv_bytes: usize) -> Vec<u8> {
    let prefix = Sha256::new()
        .chain_update(b"iv")
        .chain_update(seed.to_le_bytes())
        .chain_update((q as u64).to_le_bytes())
        .chain_update((file.len() as u64).to_le_bytes())
        .chain_update(file);
    expand(&prefix, iv_bytes)
}

/// The surrogate reduce function `h_q` over IVs given in file-id order.
pub fn reduce_value<'a>(seed: u64, q: FuncId, ivs: impl IntoIterator<Item = &'a [u8]>) -> Vec<u8> {
    let mut hasher = Sha256::new()
        .chain_update(b"reduce")
        .chain_update(seed.to_le_bytes())
        .chain_update((q as u64).to_le_bytes());
    for iv in ivs {
        hasher.update(iv);
    }
    hasher.finalize().to_vec()
}

/// Ground-truth `v_{q,j}` computed directly from the store.
pub fn true_iv(design: &Design, store: &FileStore, (q, j): IvId) -> Vec<u8> {
    let spec = design.spec();
    map_value(spec.seed, q, store.file(j), spec.iv_bytes)
}

/// A set of intermediate values keyed by `(q, j)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IvTable {
    entries: HashMap<IvId, Vec<u8>>,
}

impl IvTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: IvId) -> Option<&[u8]> {
        self.entries.get(&id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: IvId) -> bool {
        self.entries.contains_key(&id)
    }

    /// Inserts a value, returning the previous one for that id if any.
    pub fn insert(&mut self, id: IvId, value: Vec<u8>) -> Option<Vec<u8>> {
        self.entries.insert(id, value)
    }

    pub fn remove(&mut self, id: IvId) -> Option<Vec<u8>> {
        self.entries.remove(&id)
    }

    /// Ids in ascending `(q, j)` order.
    pub fn ids(&self) -> Vec<IvId> {
        let mut ids: Vec<_> = self.entries.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (IvId, &[u8])> {
        self.entries.iter().map(|(&id, v)| (id, v.as_slice()))
    }
}

/// Per-node state across the Map, Shuffle and Reduce phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub node: NodeId,
    pub local_ivs: IvTable,
    pub received_ivs: IvTable,
    pub outputs: BTreeMap<FuncId, Vec<u8>>,
}

impl NodeState {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            local_ivs: IvTable::new(),
            received_ivs: IvTable::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Looks an IV up in the local set, then the received set.
    pub fn iv(&self, id: IvId) -> Option<&[u8]> {
        self.local_ivs.get(id).or_else(|| self.received_ivs.get(id))
    }
}

/// Map phase at node `k`: every function over every file in `M_k`.
pub fn map_node(design: &Design, store: &FileStore, k: NodeId) -> NodeState {
    let spec = design.spec();
    let mut state = NodeState::new(k);
    for &j in design.files_of_node(k) {
        let file = store.file(j);
        for q in 1..=design.q() {
            state
                .local_ivs
                .insert((q, j), map_value(spec.seed, q, file, spec.iv_bytes));
        }
    }
    state
}

/// Map phase on every node, in node order.
pub fn map_all(design: &Design, store: &FileStore) -> Vec<NodeState> {
    (1..=design.k())
        .into_par_iter()
        .map(|k| map_node(design, store, k))
        .collect()
}

/// Every `u_q` computed centrally from the whole library.
pub fn oracle_outputs(design: &Design, store: &FileStore) -> BTreeMap<FuncId, Vec<u8>> {
    let spec = design.spec();
    (1..=design.q())
        .into_par_iter()
        .map(|q| {
            let ivs: Vec<Vec<u8>> = (1..=design.n())
                .map(|j| map_value(spec.seed, q, store.file(j), spec.iv_bytes))
                .collect();
            (q, reduce_value(spec.seed, q, ivs.iter().map(Vec::as_slice)))
        })
        .collect()
}

/// Reduce phase at `state.node`: computes `u_q` for every `q ∈ W_k`.
pub fn reduce_node(design: &Design, mut state: NodeState) -> Result<NodeState, EngineError> {
    let seed = design.spec().seed;
    for &q in design.functions_of_node(state.node) {
        let mut ivs = Vec::with_capacity(design.n());
        for j in 1..=design.n() {
            let iv = state.iv((q, j)).ok_or(EngineError::MissingIv {
                node: state.node,
                q,
                j,
            })?;
            ivs.push(iv);
        }
        let out = reduce_value(seed, q, ivs);
        state.outputs.insert(q, out);
    }
    Ok(state)
}
