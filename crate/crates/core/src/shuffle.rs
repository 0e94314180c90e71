//! Shuffle phase: coded multicast within node groups and the uncoded
//! unicast baseline.
//!
//! For a group `T_α` and a member `z`, the IVs `z` needs from the files the
//! other members share (`v_set`) are concatenated, zero-padded and cut into
//! `r - 1` equal segments. Segment `i` is labeled with the `i`-th node of
//! `T_α \ {z}` in ascending id order. Each member `k` multicasts the XOR of
//! the segments labeled `k`, one from every other member's request. A
//! recipient strips the segments it can compute locally and keeps its own.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Design, DesignError, GroupId, NodeId};
use crate::engine::{true_iv, FileStore, IvId, IvTable, NodeState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShuffleError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("segment count must be positive")]
    ZeroParts,
    #[error("node states do not match the design: {0}")]
    States(String),
    #[error("sender {sender} has not computed v[{q},{j}]")]
    SenderMissingIv { sender: NodeId, q: usize, j: usize },
    #[error("node {node} cannot cancel v[{q},{j}] in the message from {sender} (group {group})")]
    Undecodable {
        node: NodeId,
        group: GroupId,
        sender: NodeId,
        q: usize,
        j: usize,
    },
    #[error("node {node} is missing segment {segment} of group {group}")]
    MissingSegment {
        node: NodeId,
        group: GroupId,
        segment: usize,
    },
    #[error("decode mismatch at node {node}: v[{q},{j}] from sender {sender} (group {group}) is corrupt")]
    DecodeMismatch {
        node: NodeId,
        group: GroupId,
        sender: NodeId,
        q: usize,
        j: usize,
    },
    #[error(
        "decode mismatch at node {node}: nonzero padding from sender {sender} (group {group})"
    )]
    PaddingMismatch {
        node: NodeId,
        group: GroupId,
        sender: NodeId,
    },
    #[error("node {node} received v[{q},{j}] more than once")]
    DuplicateIv { node: NodeId, q: usize, j: usize },
    #[error("node {node} received v[{q},{j}] which it did not request")]
    Unrequested { node: NodeId, q: usize, j: usize },
    #[error("node {node} decoded {received} IVs but needs {expected}")]
    Incomplete {
        node: NodeId,
        expected: usize,
        received: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Coded,
    Unicast,
}

/// One XORed term of a coded message: segment `segment` of the request of
/// node `requester`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub requester: NodeId,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MessageMeta {
    Coded {
        segments: Vec<SegmentLabel>,
        /// Zero bytes appended to each request before splitting.
        padding: usize,
    },
    Unicast {
        q: usize,
        j: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    /// Group index, 0 for unicasts.
    pub group: GroupId,
    pub sender: NodeId,
    pub recipients: Vec<NodeId>,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
    pub kind: MessageKind,
    pub meta: MessageMeta,
}

impl Message {
    pub fn bits(&self) -> u64 {
        self.payload.len() as u64 * 8
    }
}

/// All shuffle traffic in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
    pub coded_bits: u64,
    pub unicast_bits: u64,
}

impl Transcript {
    pub fn from_messages(messages: Vec<Message>) -> Self {
        let bits = |kind| {
            messages
                .iter()
                .filter(|m| m.kind == kind)
                .map(Message::bits)
                .sum()
        };
        Self {
            coded_bits: bits(MessageKind::Coded),
            unicast_bits: bits(MessageKind::Unicast),
            messages,
        }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn total_bits(&self) -> u64 {
        self.coded_bits + self.unicast_bits
    }

    /// Coded messages of group `alpha`, ordered by sender.
    pub fn group_messages(&self, alpha: GroupId) -> &[Message] {
        let lo = self.messages.partition_point(|m| m.group < alpha);
        let hi = self.messages.partition_point(|m| m.group <= alpha);
        &self.messages[lo..hi]
    }

    /// Flips every bit of one payload byte. Test hook for fault injection.
    pub fn corrupt(&mut self, message: usize, offset: usize) {
        self.messages[message].payload[offset] ^= 0xff;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// `V^{{z}}_{T_α \ z}`: the IVs `z` wants from files every other member of
/// `T_α` stores, ordered by `(β, j, q)`.
pub fn v_set(design: &Design, alpha: GroupId, z: NodeId) -> Result<Vec<IvId>, DesignError> {
    let subs = design.substitution_set(alpha, z)?;
    let functions = design.functions_of_node(z);
    Ok(subs
        .into_iter()
        .flat_map(|beta| design.files_of_group(beta))
        .flat_map(|j| functions.iter().map(move |&q| (q, j)))
        .collect())
}

/// Equal-length pieces of a zero-padded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub parts: Vec<Vec<u8>>,
    pub padding: usize,
}

impl Segments {
    /// Concatenates the parts and drops the padding.
    pub fn join(&self) -> Vec<u8> {
        let mut out = self.parts.concat();
        out.truncate(out.len() - self.padding);
        out
    }
}

pub fn split_segments(payload: &[u8], parts: usize) -> Result<Segments, ShuffleError> {
    if parts == 0 {
        return Err(ShuffleError::ZeroParts);
    }
    let len = payload.len().div_ceil(parts);
    let padding = len * parts - payload.len();
    let mut padded = payload.to_vec();
    padded.resize(len * parts, 0);
    Ok(Segments {
        parts: (0..parts)
            .map(|i| padded[i * len..(i + 1) * len].to_vec())
            .collect(),
        padding,
    })
}

fn xor_into(acc: &mut [u8], other: &[u8]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

fn gather(table: &IvTable, ids: &[IvId]) -> Result<Vec<u8>, IvId> {
    let mut out = Vec::new();
    for &id in ids {
        out.extend_from_slice(table.get(id).ok_or(id)?);
    }
    Ok(out)
}

/// Position of `label` within `T_α \ {requester}` in ascending order.
fn segment_index(members: &[NodeId], requester: NodeId, label: NodeId) -> usize {
    members
        .iter()
        .filter(|&&n| n != requester)
        .position(|&n| n == label)
        .expect("label is a group member")
}

fn check_states(design: &Design, states: &[NodeState]) -> Result<(), ShuffleError> {
    if states.len() != design.k() {
        return Err(ShuffleError::States(format!(
            "{} states for {} nodes",
            states.len(),
            design.k()
        )));
    }
    if let Some((i, st)) = states.iter().enumerate().find(|(i, st)| st.node != i + 1) {
        return Err(ShuffleError::States(format!(
            "state {} belongs to node {}",
            i + 1,
            st.node
        )));
    }
    Ok(())
}

fn sorted_members(design: &Design, alpha: GroupId) -> Vec<NodeId> {
    let mut members = design.group(alpha).to_vec();
    members.sort_unstable();
    members
}

fn group_messages(
    design: &Design,
    states: &[NodeState],
    alpha: GroupId,
) -> Result<Vec<Message>, ShuffleError> {
    let parts = design.r() - 1;
    let members = sorted_members(design, alpha);
    let requests = members
        .iter()
        .map(|&z| Ok((z, v_set(design, alpha, z)?)))
        .collect::<Result<Vec<_>, DesignError>>()?;

    let mut out = Vec::with_capacity(members.len());
    for &sender in &members {
        let local = &states[sender - 1].local_ivs;
        let mut payload: Option<Vec<u8>> = None;
        let mut labels = Vec::with_capacity(parts);
        let mut padding = 0;
        for (z, ids) in requests.iter().filter(|(z, _)| *z != sender) {
            let bytes = gather(local, ids).map_err(|(q, j)| ShuffleError::SenderMissingIv {
                sender,
                q,
                j,
            })?;
            let segments = split_segments(&bytes, parts)?;
            let segment = segment_index(&members, *z, sender);
            padding = segments.padding;
            match payload.as_mut() {
                Some(acc) => xor_into(acc, &segments.parts[segment]),
                None => payload = Some(segments.parts[segment].clone()),
            }
            labels.push(SegmentLabel {
                requester: *z,
                segment,
            });
        }
        out.push(Message {
            group: alpha,
            sender,
            recipients: members.iter().copied().filter(|&n| n != sender).collect(),
            payload: payload.unwrap_or_default(),
            kind: MessageKind::Coded,
            meta: MessageMeta::Coded {
                segments: labels,
                padding,
            },
        });
    }
    Ok(out)
}

/// Coded shuffle over every group. Each sender only XORs IVs it computed
/// during Map; anything else is reported as [`ShuffleError::SenderMissingIv`].
pub fn shuffle_coded(design: &Design, states: &[NodeState]) -> Result<Transcript, ShuffleError> {
    check_states(design, states)?;
    let per_group = (1..=design.x())
        .into_par_iter()
        .map(|alpha| group_messages(design, states, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Transcript::from_messages(
        per_group.into_iter().flatten().collect(),
    ))
}

fn check_complete(design: &Design, state: &NodeState) -> Result<(), ShuffleError> {
    let node = state.node;
    let missing = design.n() - design.files_of_node(node).len();
    let expected = design.functions_of_node(node).len() * missing;
    if state.received_ivs.len() != expected {
        return Err(ShuffleError::Incomplete {
            node,
            expected,
            received: state.received_ivs.len(),
        });
    }
    Ok(())
}

fn accept(
    design: &Design,
    state: &mut NodeState,
    (q, j): IvId,
    value: Vec<u8>,
) -> Result<(), ShuffleError> {
    let node = state.node;
    if !design.functions_of_node(node).contains(&q) || design.has_file(node, j) {
        return Err(ShuffleError::Unrequested { node, q, j });
    }
    if state.received_ivs.insert((q, j), value).is_some() {
        return Err(ShuffleError::DuplicateIv { node, q, j });
    }
    Ok(())
}

/// Decodes every coded message addressed to `state.node`. Each recovered IV
/// is checked against the ground truth derived from `store`.
pub fn decode(
    design: &Design,
    store: &FileStore,
    mut state: NodeState,
    transcript: &Transcript,
) -> Result<NodeState, ShuffleError> {
    let z = state.node;
    let parts = design.r() - 1;
    let iv_bytes = design.spec().iv_bytes;

    for alpha in design.groups_containing(z)? {
        let mut recovered: Vec<Option<(NodeId, Vec<u8>)>> = vec![None; parts];
        let mut padding = 0;

        for message in transcript.group_messages(alpha) {
            if message.kind != MessageKind::Coded || !message.recipients.contains(&z) {
                continue;
            }
            let MessageMeta::Coded {
                segments,
                padding: pad,
            } = &message.meta
            else {
                continue;
            };
            padding = *pad;
            let mut acc = message.payload.clone();
            let mut own = None;
            for label in segments {
                if label.requester == z {
                    own = Some(label.segment);
                    continue;
                }
                let ids = v_set(design, alpha, label.requester)?;
                let bytes =
                    gather(&state.local_ivs, &ids).map_err(|(q, j)| ShuffleError::Undecodable {
                        node: z,
                        group: alpha,
                        sender: message.sender,
                        q,
                        j,
                    })?;
                let interfering = split_segments(&bytes, parts)?;
                xor_into(&mut acc, &interfering.parts[label.segment]);
            }
            if let Some(segment) = own {
                recovered[segment] = Some((message.sender, acc));
            }
        }

        let mut senders = Vec::with_capacity(parts);
        let mut joined = Vec::new();
        for (segment, slot) in recovered.into_iter().enumerate() {
            let (sender, bytes) = slot.ok_or(ShuffleError::MissingSegment {
                node: z,
                group: alpha,
                segment,
            })?;
            senders.push((sender, bytes.len()));
            joined.extend(bytes);
        }
        let seg_len = senders.first().map_or(0, |s| s.1);
        let data_len = joined.len() - padding.min(joined.len());
        if joined[data_len..].iter().any(|&b| b != 0) {
            return Err(ShuffleError::PaddingMismatch {
                node: z,
                group: alpha,
                sender: senders[parts - 1].0,
            });
        }
        joined.truncate(data_len);

        let ids = v_set(design, alpha, z)?;
        for (idx, (&id, value)) in ids.iter().zip(joined.chunks(iv_bytes)).enumerate() {
            if value != true_iv(design, store, id).as_slice() {
                let segment = (idx * iv_bytes) / seg_len.max(1);
                return Err(ShuffleError::DecodeMismatch {
                    node: z,
                    group: alpha,
                    sender: senders[segment.min(parts - 1)].0,
                    q: id.0,
                    j: id.1,
                });
            }
            accept(design, &mut state, id, value.to_vec())?;
        }
    }

    check_complete(design, &state)?;
    Ok(state)
}

/// Unicast baseline: every missing IV sent individually by the lowest-id
/// node that stores the file.
pub fn shuffle_uncoded(design: &Design, states: &[NodeState]) -> Result<Transcript, ShuffleError> {
    check_states(design, states)?;
    let mut messages = Vec::new();
    for z in 1..=design.k() {
        for &q in design.functions_of_node(z) {
            for j in 1..=design.n() {
                if design.has_file(z, j) {
                    continue;
                }
                let alpha = design.group_of_file(j);
                let sender = *design
                    .group(alpha)
                    .iter()
                    .min()
                    .expect("groups are nonempty");
                let payload = states[sender - 1]
                    .local_ivs
                    .get((q, j))
                    .ok_or(ShuffleError::SenderMissingIv { sender, q, j })?
                    .to_vec();
                messages.push(Message {
                    group: 0,
                    sender,
                    recipients: vec![z],
                    payload,
                    kind: MessageKind::Unicast,
                    meta: MessageMeta::Unicast { q, j },
                });
            }
        }
    }
    Ok(Transcript::from_messages(messages))
}

/// Receives the unicasts addressed to `state.node`.
pub fn decode_uncoded(
    design: &Design,
    store: &FileStore,
    mut state: NodeState,
    transcript: &Transcript,
) -> Result<NodeState, ShuffleError> {
    let z = state.node;
    for message in &transcript.messages {
        let MessageMeta::Unicast { q, j } = message.meta else {
            continue;
        };
        if message.recipients != [z] {
            continue;
        }
        if message.payload != true_iv(design, store, (q, j)) {
            return Err(ShuffleError::DecodeMismatch {
                node: z,
                group: 0,
                sender: message.sender,
                q,
                j,
            });
        }
        accept(design, &mut state, (q, j), message.payload.clone())?;
    }
    check_complete(design, &state)?;
    Ok(state)
}

/// Decodes at every node, in node order.
pub fn decode_all(
    design: &Design,
    store: &FileStore,
    states: Vec<NodeState>,
    transcript: &Transcript,
) -> Result<Vec<NodeState>, ShuffleError> {
    let coded = transcript
        .messages
        .first()
        .is_none_or(|m| m.kind == MessageKind::Coded);
    states
        .into_par_iter()
        .map(|st| {
            if coded {
                decode(design, store, st, transcript)
            } else {
                decode_uncoded(design, store, st, transcript)
            }
        })
        .collect()
}
