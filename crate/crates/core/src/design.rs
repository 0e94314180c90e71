//! Hypercuboid node grouping, file mapping and function assignment.
//!
//! A network is described by `P` node classes. Class `p` contributes `r_p`
//! dimensions of length `m_p`; the hypercuboid has `r = Σ r_p` dimensions and
//! `X = Π m_p^{r_p}` lattice points. Every lattice point is a node group
//! holding one node per dimension, and each group owns a batch of `η1`
//! files that is stored on exactly the group's `r` nodes.
//!
//! Identifiers are 1-based throughout (nodes `1..=K`, files `1..=N`,
//! functions `1..=Q`, groups `1..=X`, dimensions `1..=r`).
//!
//! Canonical labeling:
//!
//! ```text
//! nodes      K_1 = {1..m}, K_2 = {m+1..2m}, ...   (class 1 dimensions first)
//! groups     α - 1 = Σ_i (c_i - 1) · Π_{j>i} |K_j|  (c_1 most significant)
//! files      B_α = {(α-1)·η1 + 1, ..., α·η1}
//! functions  consecutive, node 1 first
//! ```

use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type FileId = usize;
pub type FuncId = usize;
pub type GroupId = usize;

/// Tag carried by exported design documents.
pub const DESIGN_SCHEMA: &str = "cdc-design/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("network must have at least one node class")]
    NoClasses,
    #[error("class {class}: r_p must be positive")]
    ZeroDimensions { class: usize },
    #[error("class {class}: m_p = {m} but every m_p must be >= 2")]
    DimensionTooShort { class: usize, m: usize },
    #[error("computation load r = {r} but coded shuffling needs r >= 2")]
    LoadTooSmall { r: usize },
    #[error("{field} must be positive")]
    ZeroParameter { field: &'static str },
    #[error("design too large: {what} overflows")]
    TooLarge { what: &'static str },
    #[error("group index {alpha} out of range 1..={x}")]
    GroupOutOfRange { alpha: GroupId, x: usize },
    #[error("invalid group coordinates {coords:?}")]
    BadCoords { coords: Vec<usize> },
    #[error("node {node} out of range 1..={k}")]
    NodeOutOfRange { node: NodeId, k: usize },
    #[error("node {node} is not a member of group {alpha}")]
    NotInGroup { node: NodeId, alpha: GroupId },
    #[error("design document: {0}")]
    Document(String),
    #[error("design invariant violated: {0}")]
    Invariant(String),
}

/// One node class: `r` dimensions, each holding `m` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeClass {
    pub r: usize,
    pub m: usize,
}

impl NodeClass {
    pub fn new(r: usize, m: usize) -> Self {
        Self { r, m }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.r, self.m)
    }
}

/// Parameters of a hypercuboid network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub classes: Vec<NodeClass>,
    pub eta1: usize,
    pub eta2: usize,
    /// Bytes per intermediate value (T).
    pub iv_bytes: usize,
    /// Bytes per input file (B).
    pub file_bytes: usize,
    pub seed: u64,
}

impl NetworkSpec {
    /// Spec with `η1 = η2 = 1`, 32-byte IVs, 64-byte files and seed 0.
    pub fn new(classes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            classes: classes
                .into_iter()
                .map(|(r, m)| NodeClass::new(r, m))
                .collect(),
            eta1: 1,
            eta2: 1,
            iv_bytes: 32,
            file_bytes: 64,
            seed: 0,
        }
    }

    /// Single-class (homogeneous) network with `r` dimensions of `m` nodes.
    pub fn homogeneous(r: usize, m: usize) -> Self {
        Self::new([(r, m)])
    }

    pub fn with_eta(mut self, eta1: usize, eta2: usize) -> Self {
        self.eta1 = eta1;
        self.eta2 = eta2;
        self
    }

    pub fn with_iv_bytes(mut self, iv_bytes: usize) -> Self {
        self.iv_bytes = iv_bytes;
        self
    }

    pub fn with_file_bytes(mut self, file_bytes: usize) -> Self {
        self.file_bytes = file_bytes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Computation load `r = Σ r_p`.
    pub fn load(&self) -> usize {
        self.classes.iter().map(|c| c.r).sum()
    }

    pub fn node_count(&self) -> usize {
        self.classes.iter().map(|c| c.r * c.m).sum()
    }

    /// `Y = lcm{m_p - 1}`.
    pub fn lcm_y(&self) -> usize {
        self.classes.iter().fold(1, |acc, c| acc.lcm(&(c.m - 1)))
    }

    pub fn is_homogeneous(&self) -> bool {
        self.classes.windows(2).all(|w| w[0].m == w[1].m)
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.classes.is_empty() {
            return Err(DesignError::NoClasses);
        }
        for (idx, class) in self.classes.iter().enumerate() {
            if class.r == 0 {
                return Err(DesignError::ZeroDimensions { class: idx + 1 });
            }
            if class.m < 2 {
                return Err(DesignError::DimensionTooShort {
                    class: idx + 1,
                    m: class.m,
                });
            }
        }
        let r = self.load();
        if r < 2 {
            return Err(DesignError::LoadTooSmall { r });
        }
        for (field, value) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("iv_bytes", self.iv_bytes),
            ("file_bytes", self.file_bytes),
        ] {
            if value == 0 {
                return Err(DesignError::ZeroParameter { field });
            }
        }
        Ok(())
    }

    /// Compact `r:m+r:m` rendering of the class list.
    pub fn classes_label(&self) -> String {
        self.classes
            .iter()
            .map(NodeClass::to_string)
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// A fully realized hypercuboid design. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    spec: NetworkSpec,
    k: usize,
    n: usize,
    q: usize,
    r: usize,
    x: usize,
    y: usize,
    /// Length of each dimension, `|K_i|`.
    dims: Vec<usize>,
    /// `strides[i] = Π_{j>i} dims[j]`.
    strides: Vec<usize>,
    node_class: Vec<usize>,
    node_dim: Vec<usize>,
    node_sets: Vec<Vec<NodeId>>,
    groups: Vec<Vec<NodeId>>,
    files_of_node: Vec<Vec<FileId>>,
    functions_of_node: Vec<Vec<FuncId>>,
}

fn checked_product(
    factors: impl IntoIterator<Item = usize>,
    what: &'static str,
) -> Result<usize, DesignError> {
    factors
        .into_iter()
        .try_fold(1usize, |acc, f| acc.checked_mul(f))
        .ok_or(DesignError::TooLarge { what })
}

/// Builds the canonical design for `spec`.
pub fn build_design(spec: &NetworkSpec) -> Result<Design, DesignError> {
    spec.validate()?;
    let r = spec.load();
    let y = spec.lcm_y();

    let mut dims = Vec::with_capacity(r);
    let mut dim_class = Vec::with_capacity(r);
    for (p, class) in spec.classes.iter().enumerate() {
        for _ in 0..class.r {
            dims.push(class.m);
            dim_class.push(p + 1);
        }
    }
    let k: usize = dims.iter().sum();
    let x = checked_product(dims.iter().copied(), "group count X")?;
    let n = x.checked_mul(spec.eta1).ok_or(DesignError::TooLarge {
        what: "file count N",
    })?;

    let mut strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }

    let mut node_class = Vec::with_capacity(k);
    let mut node_dim = Vec::with_capacity(k);
    let mut node_sets = Vec::with_capacity(r);
    let mut next = 1;
    for (i, &len) in dims.iter().enumerate() {
        node_sets.push((next..next + len).collect::<Vec<_>>());
        node_class.extend(std::iter::repeat_n(dim_class[i], len));
        node_dim.extend(std::iter::repeat_n(i + 1, len));
        next += len;
    }

    let mut groups = Vec::with_capacity(x);
    let mut files_of_node: Vec<Vec<FileId>> = vec![Vec::new(); k];
    for alpha in 1..=x {
        let members: Vec<NodeId> = coords_of(&dims, &strides, alpha)
            .iter()
            .zip(&node_sets)
            .map(|(&c, set)| set[c - 1])
            .collect();
        let batch = (alpha - 1) * spec.eta1 + 1..=alpha * spec.eta1;
        for &node in &members {
            files_of_node[node - 1].extend(batch.clone());
        }
        groups.push(members);
    }

    let mut functions_of_node = Vec::with_capacity(k);
    let mut next_fn = 1;
    for &p in &node_class {
        let m = spec.classes[p - 1].m;
        let count = spec.eta2 * y / (m - 1);
        functions_of_node.push((next_fn..next_fn + count).collect::<Vec<_>>());
        next_fn += count;
    }
    let q = next_fn - 1;

    Ok(Design {
        spec: spec.clone(),
        k,
        n,
        q,
        r,
        x,
        y,
        dims,
        strides,
        node_class,
        node_dim,
        node_sets,
        groups,
        files_of_node,
        functions_of_node,
    })
}

fn coords_of(dims: &[usize], strides: &[usize], alpha: GroupId) -> Vec<usize> {
    let mut rest = alpha - 1;
    dims.iter()
        .zip(strides)
        .map(|(_, &stride)| {
            let c = rest / stride;
            rest %= stride;
            c + 1
        })
        .collect()
}

impl Design {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
    /// Node count `K`.
    pub fn k(&self) -> usize {
        self.k
    }
    /// File count `N`.
    pub fn n(&self) -> usize {
        self.n
    }
    /// Function count `Q`.
    pub fn q(&self) -> usize {
        self.q
    }
    /// Computation load, the number of dimensions.
    pub fn r(&self) -> usize {
        self.r
    }
    /// Group count `X`.
    pub fn x(&self) -> usize {
        self.x
    }
    /// `Y = lcm{m_p - 1}`.
    pub fn y(&self) -> usize {
        self.y
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn node_sets(&self) -> &[Vec<NodeId>] {
        &self.node_sets
    }
    pub fn groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    fn check_node(&self, node: NodeId) -> Result<(), DesignError> {
        if node == 0 || node > self.k {
            return Err(DesignError::NodeOutOfRange { node, k: self.k });
        }
        Ok(())
    }

    fn check_group(&self, alpha: GroupId) -> Result<(), DesignError> {
        if alpha == 0 || alpha > self.x {
            return Err(DesignError::GroupOutOfRange { alpha, x: self.x });
        }
        Ok(())
    }

    /// Class index `p` (1-based) of `node`. Panics on an out-of-range node.
    pub fn node_class(&self, node: NodeId) -> usize {
        self.node_class[node - 1]
    }

    /// Dimension `i` with `node ∈ K_i`. Panics on an out-of-range node.
    pub fn node_dim(&self, node: NodeId) -> usize {
        self.node_dim[node - 1]
    }

    /// Members of `T_α`, one per dimension in dimension order.
    pub fn group(&self, alpha: GroupId) -> &[NodeId] {
        &self.groups[alpha - 1]
    }

    /// File batch `B_α`.
    pub fn files_of_group(&self, alpha: GroupId) -> std::ops::RangeInclusive<FileId> {
        let eta1 = self.spec.eta1;
        (alpha - 1) * eta1 + 1..=alpha * eta1
    }

    /// The unique group whose batch contains `file`.
    pub fn group_of_file(&self, file: FileId) -> GroupId {
        (file - 1) / self.spec.eta1 + 1
    }

    /// `M_k`, sorted ascending.
    pub fn files_of_node(&self, node: NodeId) -> &[FileId] {
        &self.files_of_node[node - 1]
    }

    /// `W_k`, sorted ascending.
    pub fn functions_of_node(&self, node: NodeId) -> &[FuncId] {
        &self.functions_of_node[node - 1]
    }

    /// Whether `node` stores `file`: true iff `node` is in the file's group.
    pub fn has_file(&self, node: NodeId, file: FileId) -> bool {
        let dim = self.node_dim(node);
        self.group(self.group_of_file(file))[dim - 1] == node
    }

    /// The node assigned reduce function `func`.
    pub fn owner_of_function(&self, func: FuncId) -> NodeId {
        self.functions_of_node
            .partition_point(|w| w.last().is_none_or(|&last| last < func))
            + 1
    }

    pub fn group_coords(&self, alpha: GroupId) -> Result<Vec<usize>, DesignError> {
        self.check_group(alpha)?;
        Ok(coords_of(&self.dims, &self.strides, alpha))
    }

    pub fn group_index(&self, coords: &[usize]) -> Result<GroupId, DesignError> {
        if coords.len() != self.r
            || coords
                .iter()
                .zip(&self.dims)
                .any(|(&c, &d)| c == 0 || c > d)
        {
            return Err(DesignError::BadCoords {
                coords: coords.to_vec(),
            });
        }
        Ok(coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (c - 1) * s)
            .sum::<usize>()
            + 1)
    }

    /// `L_{z,α}`: the groups that differ from `T_α` only in `z`'s dimension.
    pub fn substitution_set(&self, alpha: GroupId, z: NodeId) -> Result<Vec<GroupId>, DesignError> {
        self.check_group(alpha)?;
        self.check_node(z)?;
        let h = self.node_dim(z) - 1;
        if self.groups[alpha - 1][h] != z {
            return Err(DesignError::NotInGroup { node: z, alpha });
        }
        let own = self.node_sets[h].iter().position(|&n| n == z).unwrap();
        let base = alpha - own * self.strides[h];
        Ok((0..self.dims[h])
            .filter(|&c| c != own)
            .map(|c| base + c * self.strides[h])
            .collect())
    }

    /// All `α` with `k ∈ T_α`, ascending.
    pub fn groups_containing(&self, k: NodeId) -> Result<Vec<GroupId>, DesignError> {
        self.check_node(k)?;
        let h = self.node_dim(k) - 1;
        let own = self.node_sets[h].iter().position(|&n| n == k).unwrap();
        Ok((1..=self.x)
            .filter(|&alpha| ((alpha - 1) / self.strides[h]) % self.dims[h] == own)
            .collect())
    }

    /// Re-derives every structural invariant by direct enumeration.
    pub fn verify(&self) -> Result<(), DesignError> {
        let fail = |msg: String| Err(DesignError::Invariant(msg));
        let spec = &self.spec;
        if self.k != spec.node_count() {
            return fail(format!(
                "K = {} but Σ r_p m_p = {}",
                self.k,
                spec.node_count()
            ));
        }
        if self.n != self.x * spec.eta1 {
            return fail(format!("N = {} but η1·X = {}", self.n, self.x * spec.eta1));
        }
        let exact_q: usize = spec
            .classes
            .iter()
            .map(|c| spec.eta2 * self.y * c.r * c.m / (c.m - 1))
            .sum();
        if self.q != exact_q {
            return fail(format!(
                "Q = {} but η2·Y·Σ r_p m_p/(m_p-1) = {exact_q}",
                self.q
            ));
        }

        let mut seen = vec![false; self.k];
        for (i, set) in self.node_sets.iter().enumerate() {
            if set.len() != self.dims[i] {
                return fail(format!("|K_{}| = {} != {}", i + 1, set.len(), self.dims[i]));
            }
            for &node in set {
                if node == 0 || node > self.k || std::mem::replace(&mut seen[node - 1], true) {
                    return fail(format!("node sets do not partition [K] at node {node}"));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return fail("node sets do not cover [K]".into());
        }

        if self.groups.len() != self.x {
            return fail(format!(
                "{} groups, expected X = {}",
                self.groups.len(),
                self.x
            ));
        }
        let mut distinct = std::collections::HashSet::with_capacity(self.x);
        for (a, group) in self.groups.iter().enumerate() {
            if group.len() != self.r
                || group
                    .iter()
                    .enumerate()
                    .any(|(i, node)| !self.node_sets[i].contains(node))
            {
                return fail(format!("group {} is not one node per dimension", a + 1));
            }
            if !distinct.insert(group.clone()) {
                return fail(format!("group {} repeats an earlier group", a + 1));
            }
        }

        let mut total_files = 0;
        for node in 1..=self.k {
            let expected: Vec<FileId> = self
                .groups_containing(node)?
                .into_iter()
                .flat_map(|alpha| self.files_of_group(alpha))
                .collect();
            let files = self.files_of_node(node);
            if files != expected.as_slice() {
                return fail(format!(
                    "M_{node} differs from the union of its group batches"
                ));
            }
            let m = spec.classes[self.node_class(node) - 1].m;
            if files.len() * m != self.n {
                return fail(format!("|M_{node}| = {} != N/m_p", files.len()));
            }
            let w = self.functions_of_node(node).len();
            if w * (m - 1) != spec.eta2 * self.y {
                return fail(format!("|W_{node}| = {w} != η2·Y/(m_p-1)"));
            }
            total_files += files.len();
        }
        if total_files != self.r * self.n {
            return fail(format!("Σ|M_k| = {total_files} != r·N"));
        }

        for (i, set) in self.node_sets.iter().enumerate() {
            let mut cover = vec![false; self.n];
            for &node in set {
                for &f in self.files_of_node(node) {
                    if std::mem::replace(&mut cover[f - 1], true) {
                        return fail(format!("K_{} maps file {f} twice", i + 1));
                    }
                }
            }
            if cover.iter().any(|c| !c) {
                return fail(format!("K_{} does not cover [N]", i + 1));
            }
        }

        let mut assigned = vec![false; self.q];
        for node in 1..=self.k {
            for &f in self.functions_of_node(node) {
                if f == 0 || f > self.q || std::mem::replace(&mut assigned[f - 1], true) {
                    return fail(format!("function {f} assigned twice or out of range"));
                }
            }
        }
        if assigned.iter().any(|a| !a) {
            return fail("function sets do not cover [Q]".into());
        }
        Ok(())
    }

    pub fn to_document(&self) -> DesignDocument {
        DesignDocument {
            schema: DESIGN_SCHEMA.to_string(),
            spec: self.spec.clone(),
            k: self.k,
            n: self.n,
            q: self.q,
            r: self.r,
            x: self.x,
            y: self.y,
            node_class: self.node_class.clone(),
            node_set: self.node_dim.clone(),
            node_sets: self.node_sets.clone(),
            groups: self.groups.clone(),
            files_of_group: (1..=self.x)
                .map(|a| self.files_of_group(a).collect())
                .collect(),
            files_of_node: self.files_of_node.clone(),
            functions_of_node: self.functions_of_node.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("design serializes")
    }

    /// Parses a `cdc-design/1` document. The embedded spec is rebuilt and the
    /// document must match the canonical design exactly.
    pub fn from_json(text: &str) -> Result<Design, DesignError> {
        let doc: DesignDocument =
            serde_json::from_str(text).map_err(|e| DesignError::Document(e.to_string()))?;
        doc.into_design()
    }
}

/// Serialized form of a [`Design`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub schema: String,
    pub spec: NetworkSpec,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub r: usize,
    #[serde(rename = "X")]
    pub x: usize,
    #[serde(rename = "Y")]
    pub y: usize,
    pub node_class: Vec<usize>,
    pub node_set: Vec<usize>,
    pub node_sets: Vec<Vec<NodeId>>,
    pub groups: Vec<Vec<NodeId>>,
    pub files_of_group: Vec<Vec<FileId>>,
    pub files_of_node: Vec<Vec<FileId>>,
    pub functions_of_node: Vec<Vec<FuncId>>,
}

impl DesignDocument {
    pub fn into_design(self) -> Result<Design, DesignError> {
        if self.schema != DESIGN_SCHEMA {
            return Err(DesignError::Document(format!(
                "unsupported schema {:?}, expected {DESIGN_SCHEMA:?}",
                self.schema
            )));
        }
        let design = build_design(&self.spec)?;
        if design.to_document() != self {
            return Err(DesignError::Document(
                "document does not match the canonical design for its spec".into(),
            ));
        }
        Ok(design)
    }
}
