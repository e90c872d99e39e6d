//! N-port wavelength-addressing router.
//!
//! A router is a set of N WDMs whose channel ports are patched together in
//! pairs. Which wavelength connects port `i` to port `j` is a symmetric proper
//! edge coloring of the complete graph K_N: every port sees each of its
//! channels exactly once, so a photon's wavelength fully determines where it
//! leaves the router.
//!
//! The assignment is built with the circle method (round-robin tournament
//! schedule). For the 4-port case a fixed channel permutation is applied so
//! that the result matches the demonstration router's wiring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Uniform insertion loss used when no per-pair measurement is supplied, dB.
pub const DEFAULT_INSERTION_LOSS_DB: f64 = 2.2;

/// Crosstalk suppression of the demonstration WDMs (worst case), dB.
pub const DEFAULT_CROSSTALK_DB: f64 = 28.0;

/// Accepted crosstalk range for a `RouterSpec`, dB.
pub const CROSSTALK_SANE_RANGE_DB: (f64, f64) = (10.0, 60.0);

/// First wavelength of the default channel grid, nm.
pub const GRID_START_NM: f64 = 1510.0;

/// Spacing of the default channel grid (CWDM), nm.
pub const GRID_SPACING_NM: f64 = 20.0;

const FOUR_PORT_LOSS_FIXTURE: &str = include_str!("../fixtures/four_port_loss.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("port {0} has no channel to itself")]
    SelfLoop(PortId),
    #[error("channel {channel} is not connected at port {port}")]
    UnroutableWavelength { port: PortId, channel: ChannelId },
    #[error("loss matrix: {0}")]
    LossFormat(String),
}

/// Router port. Displayed as a spreadsheet-style letter label (A, B, ..., Z, AA, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub usize);

impl PortId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self) -> String {
        port_label(self.0)
    }

    pub fn from_label(label: &str) -> Option<PortId> {
        parse_port_label(label).map(PortId)
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Bijective base-26 label: 0 → "A", 25 → "Z", 26 → "AA".
pub fn port_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn parse_port_label(label: &str) -> Option<usize> {
    if label.is_empty() || !label.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    let mut n: usize = 0;
    for b in label.bytes() {
        n = n.checked_mul(26)?.checked_add((b - b'A') as usize + 1)?;
    }
    Some(n - 1)
}

/// WDM channel. Displayed as "λ1", "λ2", ... (one-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self) -> String {
        format!("λ{}", self.0 + 1)
    }

    pub fn from_label(label: &str) -> Option<ChannelId> {
        let digits = label.strip_prefix('λ')?;
        let n: usize = digits.parse().ok()?;
        n.checked_sub(1).map(ChannelId)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "λ{}", self.0 + 1)
    }
}

/// Default wavelength tags: a 20 nm grid starting at 1510 nm.
pub fn default_channel_grid_nm(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| GRID_START_NM + GRID_SPACING_NM * k as f64)
        .collect()
}

/// Number of WDMs and channels per WDM needed for an N-port router.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WdmRequirements {
    pub wdm_count: usize,
    pub channels_per_wdm: usize,
}

impl fmt::Display for WdmRequirements {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} WDMs × {} channels",
            self.wdm_count, self.channels_per_wdm
        )
    }
}

pub fn wdm_requirements(n_ports: usize) -> Result<WdmRequirements, RouterError> {
    check_port_count(n_ports)?;
    let channels_per_wdm = if n_ports.is_multiple_of(2) {
        n_ports - 1
    } else {
        n_ports
    };
    Ok(WdmRequirements {
        wdm_count: n_ports,
        channels_per_wdm,
    })
}

fn check_port_count(n_ports: usize) -> Result<(), RouterError> {
    if n_ports < 2 {
        return Err(RouterError::InvalidArgument(format!(
            "a router needs at least 2 ports, got {n_ports}"
        )));
    }
    Ok(())
}

/// Pair → channel map of an N-port router.
///
/// Stored as a dense N×N matrix so that hand-built (possibly broken) maps can
/// be represented and diagnosed by [`WavelengthAssignment::verify`].
#[derive(Clone, Debug, PartialEq)]
pub struct WavelengthAssignment {
    n_ports: usize,
    cells: Vec<Option<ChannelId>>,
    nm: Option<Vec<f64>>,
}

/// Circle-method channel for round `r` → canonical channel. Only the 4-port
/// router is permuted, to reproduce the demonstration table.
fn canonical_channel(n_ports: usize, round: usize) -> ChannelId {
    const FOUR_PORT: [usize; 3] = [0, 2, 1];
    if n_ports == 4 {
        ChannelId(FOUR_PORT[round])
    } else {
        ChannelId(round)
    }
}

/// Builds the round-robin assignment for `n_ports` ports.
///
/// Even N uses N−1 rounds over the real ports; odd N adds a phantom port and
/// drops its pairs, leaving N rounds with one idle port per round.
pub fn build_assignment(n_ports: usize) -> Result<WavelengthAssignment, RouterError> {
    check_port_count(n_ports)?;
    let vertices = if n_ports.is_multiple_of(2) {
        n_ports
    } else {
        n_ports + 1
    };
    let rounds = vertices - 1;
    let pivot = vertices - 1;
    let mut a = WavelengthAssignment::empty(n_ports);
    for round in 0..rounds {
        let ch = canonical_channel(n_ports, round);
        let mut pairs = vec![(round, pivot)];
        for k in 1..vertices / 2 {
            pairs.push(((round + k) % rounds, (round + rounds - k) % rounds));
        }
        for (u, v) in pairs {
            if u < n_ports && v < n_ports {
                a.set(u, v, ch);
            }
        }
    }
    Ok(a)
}

impl WavelengthAssignment {
    fn empty(n_ports: usize) -> Self {
        WavelengthAssignment {
            n_ports,
            cells: vec![None; n_ports * n_ports],
            nm: None,
        }
    }

    fn set(&mut self, i: usize, j: usize, ch: ChannelId) {
        let n = self.n_ports;
        self.cells[i * n + j] = Some(ch);
        self.cells[j * n + i] = Some(ch);
    }

    /// Symmetric assignment from unordered pairs. Later pairs overwrite earlier ones.
    pub fn from_pairs(
        n_ports: usize,
        pairs: &[(PortId, PortId, ChannelId)],
    ) -> Result<Self, RouterError> {
        check_port_count(n_ports)?;
        let mut a = Self::empty(n_ports);
        for &(i, j, ch) in pairs {
            a.check_pair(i, j)?;
            a.set(i.0, j.0, ch);
        }
        Ok(a)
    }

    /// Raw row-major matrix, unchecked apart from its shape. Intended for
    /// importing or hand-building maps that are then passed to `verify`.
    pub fn from_matrix(n_ports: usize, cells: Vec<Option<ChannelId>>) -> Result<Self, RouterError> {
        check_port_count(n_ports)?;
        if cells.len() != n_ports * n_ports {
            return Err(RouterError::InvalidArgument(format!(
                "expected {} cells, got {}",
                n_ports * n_ports,
                cells.len()
            )));
        }
        Ok(WavelengthAssignment {
            n_ports,
            cells,
            nm: None,
        })
    }

    /// Attaches wavelength tags, one per channel index in use.
    pub fn with_channel_nm(mut self, nm: Vec<f64>) -> Result<Self, RouterError> {
        let needed = self
            .channels_used()
            .iter()
            .map(|c| c.0 + 1)
            .max()
            .unwrap_or(0);
        if nm.len() < needed {
            return Err(RouterError::InvalidArgument(format!(
                "{} wavelength tags for {} channels",
                nm.len(),
                needed
            )));
        }
        let mut sorted = nm.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) || nm.iter().any(|x| !x.is_finite() || *x <= 0.0)
        {
            return Err(RouterError::InvalidArgument(
                "wavelength tags must be distinct positive values".into(),
            ));
        }
        self.nm = Some(nm);
        Ok(self)
    }

    /// Same assignment with the default 20 nm grid attached.
    pub fn with_default_grid(self) -> Self {
        let count = self
            .channels_used()
            .iter()
            .map(|c| c.0 + 1)
            .max()
            .unwrap_or(0);
        self.with_channel_nm(default_channel_grid_nm(count))
            .expect("grid values are distinct")
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn ports(&self) -> impl Iterator<Item = PortId> {
        (0..self.n_ports).map(PortId)
    }

    pub fn channel_nm(&self, ch: ChannelId) -> Option<f64> {
        self.nm.as_ref().and_then(|nm| nm.get(ch.0).copied())
    }

    /// Raw cell lookup; `None` on the diagonal or for missing entries.
    pub fn cell(&self, i: PortId, j: PortId) -> Option<ChannelId> {
        if i.0 >= self.n_ports || j.0 >= self.n_ports {
            return None;
        }
        self.cells[i.0 * self.n_ports + j.0]
    }

    fn check_pair(&self, i: PortId, j: PortId) -> Result<(), RouterError> {
        for p in [i, j] {
            if p.0 >= self.n_ports {
                return Err(RouterError::InvalidArgument(format!(
                    "port index {} out of range for a {}-port router",
                    p.0, self.n_ports
                )));
            }
        }
        if i == j {
            return Err(RouterError::SelfLoop(i));
        }
        Ok(())
    }

    /// Channel connecting ports `i` and `j`.
    pub fn wavelength_for(&self, i: PortId, j: PortId) -> Result<ChannelId, RouterError> {
        self.check_pair(i, j)?;
        self.cell(i, j).ok_or_else(|| {
            RouterError::InvalidArgument(format!("no channel assigned between {i} and {j}"))
        })
    }

    /// Output port for a photon of channel `ch` entering at `in_port`.
    pub fn route(&self, in_port: PortId, ch: ChannelId) -> Result<PortId, RouterError> {
        if in_port.0 >= self.n_ports {
            return Err(RouterError::InvalidArgument(format!(
                "port index {} out of range for a {}-port router",
                in_port.0, self.n_ports
            )));
        }
        let row = &self.cells[in_port.0 * self.n_ports..(in_port.0 + 1) * self.n_ports];
        row.iter().position(|c| *c == Some(ch)).map(PortId).ok_or(
            RouterError::UnroutableWavelength {
                port: in_port,
                channel: ch,
            },
        )
    }

    /// Channels present at `port`, in ascending order.
    pub fn channels_at(&self, port: PortId) -> Vec<ChannelId> {
        let mut chans: Vec<ChannelId> = self.ports().filter_map(|j| self.cell(port, j)).collect();
        chans.sort();
        chans.dedup();
        chans
    }

    pub fn channels_used(&self) -> BTreeSet<ChannelId> {
        self.cells.iter().flatten().copied().collect()
    }

    /// Unordered pairs `i < j` with their channel (if any).
    pub fn pairs(&self) -> impl Iterator<Item = (PortId, PortId, Option<ChannelId>)> + '_ {
        let n = self.n_ports;
        (0..n).flat_map(move |i| {
            ((i + 1)..n).map(move |j| (PortId(i), PortId(j), self.cell(PortId(i), PortId(j))))
        })
    }

    /// Renames channel `c` to `perm[c]`. `perm` must be a permutation.
    pub fn relabel_channels(&self, perm: &[usize]) -> Result<Self, RouterError> {
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(RouterError::InvalidArgument("not a permutation".into()));
            }
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in &self.cells {
            cells.push(match c {
                None => None,
                Some(ch) => Some(ChannelId(*perm.get(ch.0).ok_or_else(|| {
                    RouterError::InvalidArgument(format!("permutation does not cover {ch}"))
                })?)),
            });
        }
        Ok(WavelengthAssignment {
            n_ports: self.n_ports,
            cells,
            nm: None,
        })
    }

    /// Checks totality, symmetry, properness and the channel-count rule.
    pub fn verify(&self) -> VerificationReport {
        verify_assignment(self)
    }

    /// Human-readable matrix: rows and columns are port labels, diagonal "—".
    pub fn to_text_table(&self) -> String {
        let labels: Vec<String> = self.ports().map(|p| p.label()).collect();
        let width = self
            .cells
            .iter()
            .flatten()
            .map(|c| c.label().chars().count())
            .chain(labels.iter().map(|l| l.chars().count()))
            .max()
            .unwrap_or(1)
            + 2;
        let mut out = String::new();
        out.push_str(&format!("{:<width$}", ""));
        for l in &labels {
            out.push_str(&format!("{l:<width$}"));
        }
        trim_end_in_place(&mut out);
        out.push('\n');
        for i in self.ports() {
            out.push_str(&format!("{:<width$}", labels[i.0]));
            for j in self.ports() {
                let cell = if i == j {
                    "—".to_string()
                } else {
                    self.cell(i, j)
                        .map(|c| c.label())
                        .unwrap_or_else(|| "?".into())
                };
                out.push_str(&format!("{cell:<width$}"));
            }
            trim_end_in_place(&mut out);
            out.push('\n');
        }
        out
    }

    /// Machine-readable form: one `[[link]]` table per unordered pair.
    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Export {
            ports: usize,
            link: Vec<LinkRow>,
        }
        #[derive(Serialize)]
        struct LinkRow {
            port_i: String,
            port_j: String,
            channel: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            nm: Option<f64>,
        }
        let link = self
            .pairs()
            .filter_map(|(i, j, ch)| {
                ch.map(|ch| LinkRow {
                    port_i: i.label(),
                    port_j: j.label(),
                    channel: ch.label(),
                    nm: self.channel_nm(ch),
                })
            })
            .collect();
        toml::to_string(&Export {
            ports: self.n_ports,
            link,
        })
        .expect("assignment export is always serializable")
    }
}

fn trim_end_in_place(s: &mut String) {
    let trimmed = s.trim_end_matches(' ').len();
    s.truncate(trimmed);
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "{mark:4} {:<14} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn verify_assignment(a: &WavelengthAssignment) -> VerificationReport {
    let n = a.n_ports;
    let ports = || (0..n).map(PortId);

    let mut holes = Vec::new();
    for i in ports() {
        for j in ports() {
            let cell = a.cells[i.0 * n + j.0];
            if (i == j) != cell.is_none() {
                holes.push(format!("({i},{j})"));
            }
        }
    }
    let totality = CheckResult {
        name: "totality",
        passed: holes.is_empty(),
        detail: if holes.is_empty() {
            format!("all {} pairs assigned", n * (n - 1) / 2)
        } else {
            format!("bad cells: {}", holes.join(" "))
        },
    };

    let asym: Vec<String> = a
        .pairs()
        .filter(|&(i, j, _)| a.cell(i, j) != a.cell(j, i))
        .map(|(i, j, _)| format!("{{{i},{j}}}"))
        .collect();
    let symmetry = CheckResult {
        name: "symmetry",
        passed: asym.is_empty(),
        detail: if asym.is_empty() {
            "channel_of(i,j) = channel_of(j,i)".into()
        } else {
            format!("asymmetric pairs: {}", asym.join(" "))
        },
    };

    let mut improper = Vec::new();
    for i in ports() {
        let mut seen: BTreeMap<ChannelId, usize> = BTreeMap::new();
        for j in ports() {
            if let Some(ch) = a.cell(i, j) {
                *seen.entry(ch).or_default() += 1;
            }
        }
        let repeated: Vec<String> = seen
            .iter()
            .filter(|(_, &k)| k > 1)
            .map(|(ch, _)| ch.label())
            .collect();
        if !repeated.is_empty() {
            improper.push(format!("port {i} repeats {}", repeated.join(",")));
        }
    }
    let properness = CheckResult {
        name: "properness",
        passed: improper.is_empty(),
        detail: if improper.is_empty() {
            "channels distinct at every port".into()
        } else {
            improper.join("; ")
        },
    };

    let used = a.channels_used().len();
    let expected = if n.is_multiple_of(2) { n - 1 } else { n };
    let channel_count = CheckResult {
        name: "channel-count",
        passed: used == expected,
        detail: format!("{used} channels used, {expected} expected"),
    };

    VerificationReport {
        checks: vec![totality, symmetry, properness, channel_count],
    }
}

/// Directed insertion-loss matrix, dB. Entry `(i, j)` is the loss from input
/// `i` to output `j`; the matrix need not be symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMatrix {
    n_ports: usize,
    default_db: f64,
    db: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossFile {
    #[serde(default)]
    default_db: Option<f64>,
    #[serde(default)]
    entry: Vec<LossEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossEntry {
    from: String,
    to: String,
    db: f64,
}

fn check_db(db: f64, what: &str) -> Result<(), RouterError> {
    if !db.is_finite() || db < 0.0 {
        return Err(RouterError::InvalidArgument(format!(
            "{what} must be a finite non-negative dB value, got {db}"
        )));
    }
    Ok(())
}

impl LossMatrix {
    pub fn uniform(n_ports: usize, db: f64) -> Result<Self, RouterError> {
        check_port_count(n_ports)?;
        check_db(db, "insertion loss")?;
        Ok(LossMatrix {
            n_ports,
            default_db: db,
            db: vec![db; n_ports * n_ports],
        })
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn default_db(&self) -> f64 {
        self.default_db
    }

    pub fn get(&self, from: PortId, to: PortId) -> Result<f64, RouterError> {
        if from.0 >= self.n_ports || to.0 >= self.n_ports {
            return Err(RouterError::InvalidArgument(format!(
                "port pair ({from},{to}) out of range"
            )));
        }
        if from == to {
            return Err(RouterError::SelfLoop(from));
        }
        Ok(self.db[from.0 * self.n_ports + to.0])
    }

    pub fn set(&mut self, from: PortId, to: PortId, db: f64) -> Result<(), RouterError> {
        self.get(from, to)?;
        check_db(db, "insertion loss")?;
        self.db[from.0 * self.n_ports + to.0] = db;
        Ok(())
    }

    /// Parses a loss file. Entries not listed fall back to `default_db`
    /// (or [`DEFAULT_INSERTION_LOSS_DB`] if the file omits it).
    pub fn from_toml_str(text: &str, n_ports: usize) -> Result<Self, RouterError> {
        let file: LossFile =
            toml::from_str(text).map_err(|e| RouterError::LossFormat(e.to_string()))?;
        let default_db = file.default_db.unwrap_or(DEFAULT_INSERTION_LOSS_DB);
        let mut m = Self::uniform(n_ports, default_db)?;
        let mut seen = BTreeSet::new();
        for e in &file.entry {
            let parse = |l: &str| {
                PortId::from_label(l)
                    .ok_or_else(|| RouterError::LossFormat(format!("bad port label {l:?}")))
            };
            let (from, to) = (parse(&e.from)?, parse(&e.to)?);
            if !seen.insert((from, to)) {
                return Err(RouterError::LossFormat(format!(
                    "duplicate entry {from}->{to}"
                )));
            }
            m.set(from, to, e.db)?;
        }
        Ok(m)
    }

    /// Writes every directed entry explicitly, row-major.
    pub fn to_toml_string(&self) -> String {
        let mut entry = Vec::new();
        for i in 0..self.n_ports {
            for j in 0..self.n_ports {
                if i != j {
                    entry.push(LossEntry {
                        from: port_label(i),
                        to: port_label(j),
                        db: self.db[i * self.n_ports + j],
                    });
                }
            }
        }
        toml::to_string(&LossFile {
            default_db: Some(self.default_db),
            entry,
        })
        .expect("loss export is always serializable")
    }

    /// Measured losses of the 4-port demonstration router.
    pub fn reference_four_port() -> Self {
        Self::from_toml_str(FOUR_PORT_LOSS_FIXTURE, 4).expect("shipped fixture parses")
    }
}

/// Assignment plus its physical loss figures.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterSpec {
    assignment: WavelengthAssignment,
    loss: LossMatrix,
    crosstalk_db: f64,
}

impl RouterSpec {
    pub fn new(
        assignment: WavelengthAssignment,
        loss: LossMatrix,
        crosstalk_db: f64,
    ) -> Result<Self, RouterError> {
        Self::with_crosstalk_range(assignment, loss, crosstalk_db, CROSSTALK_SANE_RANGE_DB)
    }

    pub fn with_crosstalk_range(
        assignment: WavelengthAssignment,
        loss: LossMatrix,
        crosstalk_db: f64,
        (lo, hi): (f64, f64),
    ) -> Result<Self, RouterError> {
        if assignment.n_ports() != loss.n_ports() {
            return Err(RouterError::InvalidArgument(format!(
                "assignment has {} ports but loss matrix has {}",
                assignment.n_ports(),
                loss.n_ports()
            )));
        }
        if !(crosstalk_db > 0.0 && (lo..=hi).contains(&crosstalk_db)) {
            return Err(RouterError::InvalidArgument(format!(
                "crosstalk {crosstalk_db} dB outside [{lo}, {hi}] dB"
            )));
        }
        Ok(RouterSpec {
            assignment,
            loss,
            crosstalk_db,
        })
    }

    /// N-port router with uniform insertion loss.
    pub fn uniform(n_ports: usize, loss_db: f64) -> Result<Self, RouterError> {
        let a = build_assignment(n_ports)?.with_default_grid();
        Self::new(
            a,
            LossMatrix::uniform(n_ports, loss_db)?,
            DEFAULT_CROSSTALK_DB,
        )
    }

    /// The 4-port demonstration router: canonical assignment, 1510/1530/1550 nm,
    /// measured losses.
    pub fn reference_four_port() -> Self {
        let a = build_assignment(4)
            .and_then(|a| a.with_channel_nm(vec![1510.0, 1530.0, 1550.0]))
            .expect("4-port assignment");
        Self::new(a, LossMatrix::reference_four_port(), DEFAULT_CROSSTALK_DB)
            .expect("reference router is valid")
    }

    pub fn assignment(&self) -> &WavelengthAssignment {
        &self.assignment
    }

    pub fn loss(&self) -> &LossMatrix {
        &self.loss
    }

    pub fn n_ports(&self) -> usize {
        self.assignment.n_ports()
    }

    pub fn crosstalk_db(&self) -> f64 {
        self.crosstalk_db
    }

    pub fn route(&self, in_port: PortId, ch: ChannelId) -> Result<PortId, RouterError> {
        self.assignment.route(in_port, ch)
    }

    pub fn wavelength_for(&self, i: PortId, j: PortId) -> Result<ChannelId, RouterError> {
        self.assignment.wavelength_for(i, j)
    }

    pub fn path_loss_db(&self, in_port: PortId, out_port: PortId) -> Result<f64, RouterError> {
        self.loss.get(in_port, out_port)
    }
}
