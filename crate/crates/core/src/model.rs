//! The cooperative multi-cell downlink as one auxiliary MIMO broadcast channel.
//!
//! Antenna indices follow the base-station order: antennas
//! `a·M_B .. (a+1)·M_B` (0-based) belong to base station `a`. Users are
//! indexed `0..K` in cell order; per-cell user counts never enter the
//! mathematics, so only the total `K` is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, c64, ComplexMatrix};
use crate::rng::CscgSampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintScheme {
    /// One budget per base station (`M_B` antennas each).
    PerBs,
    /// One budget per transmit antenna.
    PerAntenna,
    /// A single budget over all antennas.
    SumPower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecodingMode {
    /// Block diagonalization: no user may interfere with any other.
    Bd,
    /// Zero-forcing with dirty-paper ordering: user `k` must only be
    /// invisible to users `j > k`.
    ZfDpc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_bs: usize,
    pub antennas_per_bs: usize,
    pub num_ms: usize,
    pub antennas_per_ms: usize,
    /// Budget `P` applied to every constraint group (linear units).
    pub power_budget: f64,
    pub weights: Vec<f64>,
    pub scheme: ConstraintScheme,
    pub mode: PrecodingMode,
    /// Optional per-group budgets overriding `power_budget`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_budgets: Option<Vec<f64>>,
}

impl SystemConfig {
    /// Unit weights, per-BS constraints, BD mode.
    pub fn new(
        num_bs: usize,
        antennas_per_bs: usize,
        num_ms: usize,
        antennas_per_ms: usize,
        power_budget: f64,
    ) -> Self {
        Self {
            num_bs,
            antennas_per_bs,
            num_ms,
            antennas_per_ms,
            power_budget,
            weights: vec![1.0; num_ms],
            scheme: ConstraintScheme::PerBs,
            mode: PrecodingMode::Bd,
            group_budgets: None,
        }
    }

    pub fn with_scheme(mut self, scheme: ConstraintScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_mode(mut self, mode: PrecodingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    /// `M = M_B · A`.
    pub fn total_antennas(&self) -> usize {
        self.antennas_per_bs * self.num_bs
    }

    pub fn group_count(&self) -> usize {
        match self.scheme {
            ConstraintScheme::PerBs => self.num_bs,
            ConstraintScheme::PerAntenna => self.total_antennas(),
            ConstraintScheme::SumPower => 1,
        }
    }

    /// Antennas per constraint group (the whole array for `SumPower`).
    pub fn group_size(&self) -> usize {
        match self.scheme {
            ConstraintScheme::PerBs => self.antennas_per_bs,
            ConstraintScheme::PerAntenna => 1,
            ConstraintScheme::SumPower => self.total_antennas(),
        }
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.group_budgets
            .clone()
            .unwrap_or_else(|| vec![self.power_budget; self.group_count()])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_bs == 0
            || self.antennas_per_bs == 0
            || self.num_ms == 0
            || self.antennas_per_ms == 0
        {
            return bad("A, M_B, K and N must all be at least 1".into());
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return bad(format!(
                "power budget must be positive, got {}",
                self.power_budget
            ));
        }
        if self.weights.len() != self.num_ms {
            return bad(format!(
                "{} weights supplied for {} users",
                self.weights.len(),
                self.num_ms
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("all rate weights must be positive".into());
        }
        if self.antennas_per_ms * self.num_ms > self.total_antennas() {
            return bad(format!(
                "N·K = {} exceeds M = {}",
                self.antennas_per_ms * self.num_ms,
                self.total_antennas()
            ));
        }
        if let Some(b) = &self.group_budgets {
            if b.len() != self.group_count() {
                return bad(format!(
                    "{} group budgets for {} constraint groups",
                    b.len(),
                    self.group_count()
                ));
            }
            if b.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return bad("group budgets must be positive".into());
            }
        }
        Ok(())
    }
}

/// Per-user downlink channels `H_k` (`N × M`).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub seed: u64,
    pub channels: Vec<ComplexMatrix>,
}

/// Draws i.i.d. CSCG(0, 1) channels with [`CscgSampler`]. A user whose
/// channel is row-rank deficient is redrawn on a fresh stream.
pub fn generate_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    let sampler = CscgSampler::new(seed);
    let (n, m) = (config.antennas_per_ms, config.total_antennas());
    let channels = (0..config.num_ms)
        .map(|k| {
            (0u64..)
                .map(|attempt| {
                    let stream = k as u64 | (attempt << 32);
                    ComplexMatrix::from_fn(n, m, |i, j| sampler.entry(stream, i, j))
                })
                .find(|h| numerics::reduced_svd(h, None).is_ok_and(|s| s.rank() == n))
                .expect("unbounded redraw")
        })
        .collect();
    ChannelSet { seed, channels }
}

/// Diagonal 0/1 constraint masks `B_a`, stored as antenna index lists.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMasks {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl ConstraintMasks {
    pub fn from_groups(groups: Vec<Vec<usize>>, antennas: usize) -> Result<Self> {
        let mut group_of = vec![usize::MAX; antennas];
        for (a, g) in groups.iter().enumerate() {
            for &i in g {
                if i >= antennas || group_of[i] != usize::MAX {
                    return Err(Error::Contract(format!(
                        "antenna {i} is out of range or in more than one group"
                    )));
                }
                group_of[i] = a;
            }
        }
        if group_of.contains(&usize::MAX) {
            return Err(Error::Contract(
                "constraint groups do not cover every antenna".into(),
            ));
        }
        Ok(Self { groups, group_of })
    }

    pub fn count(&self) -> usize {
        self.groups.len()
    }

    pub fn antennas(&self) -> usize {
        self.group_of.len()
    }

    pub fn group(&self, a: usize) -> &[usize] {
        &self.groups[a]
    }

    pub fn group_of(&self, antenna: usize) -> usize {
        self.group_of[antenna]
    }

    /// `B_a` as an explicit `M × M` matrix.
    pub fn matrix(&self, a: usize) -> ComplexMatrix {
        let mut b = ComplexMatrix::zeros(self.antennas(), self.antennas());
        for &i in &self.groups[a] {
            b[(i, i)] = c64::new(1.0, 0.0);
        }
        b
    }

    /// Diagonal of `B_μ = Σ_a μ_a B_a`.
    pub fn price_diagonal(&self, mu: &[f64]) -> Vec<f64> {
        self.group_of.iter().map(|&a| mu[a]).collect()
    }

    /// `Tr(B_a X)` for every group, given the diagonal of `X`.
    pub fn group_sums(&self, diagonal: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| diagonal[i]).sum())
            .collect()
    }
}

pub fn build_constraint_masks(config: &SystemConfig) -> ConstraintMasks {
    let m = config.total_antennas();
    let groups: Vec<Vec<usize>> = match config.scheme {
        ConstraintScheme::PerBs => (0..config.num_bs)
            .map(|a| (a * config.antennas_per_bs..(a + 1) * config.antennas_per_bs).collect())
            .collect(),
        ConstraintScheme::PerAntenna => (0..m).map(|i| vec![i]).collect(),
        ConstraintScheme::SumPower => vec![(0..m).collect()],
    };
    ConstraintMasks::from_groups(groups, m).expect("scheme layouts partition the antennas")
}

/// Users whose channels user `k`'s signal must not reach.
pub fn protected_users(mode: PrecodingMode, num_ms: usize, k: usize) -> Vec<usize> {
    match mode {
        PrecodingMode::Bd => (0..num_ms).filter(|&j| j != k).collect(),
        PrecodingMode::ZfDpc => (k + 1..num_ms).collect(),
    }
}

/// Stacked channels `G_k` of the users protected from user `k`, or `None`
/// when nobody is protected.
pub fn interference_stack(
    channels: &ChannelSet,
    k: usize,
    mode: PrecodingMode,
) -> Option<ComplexMatrix> {
    let users = protected_users(mode, channels.channels.len(), k);
    if users.is_empty() {
        return None;
    }
    let m = channels.channels[0].ncols();
    let rows: usize = users.iter().map(|&j| channels.channels[j].nrows()).sum();
    let mut g = ComplexMatrix::zeros(rows, m);
    let mut r = 0;
    for &j in &users {
        let h = &channels.channels[j];
        g.view_mut((r, 0), (h.nrows(), m)).copy_from(h);
        r += h.nrows();
    }
    Some(g)
}

/// Orthonormal basis `V_k` of the row space of `G_k` (`M × rank`).
pub fn interference_rowspace(
    channels: &ChannelSet,
    k: usize,
    mode: PrecodingMode,
) -> Result<Option<ComplexMatrix>> {
    interference_stack(channels, k, mode)
        .map(|g| numerics::reduced_svd(&g, None).map(|s| s.v))
        .transpose()
}

/// Orthonormal basis `Ṽ_k` of the null space of `G_k`.
pub fn complement_basis(
    channels: &ChannelSet,
    k: usize,
    mode: PrecodingMode,
) -> Result<ComplexMatrix> {
    let m = channels.channels[k].ncols();
    match interference_rowspace(channels, k, mode)? {
        None => Ok(ComplexMatrix::identity(m, m)),
        Some(v) if v.ncols() >= m => Err(Error::Infeasible(format!(
            "the protected users of user {k} span all {m} transmit dimensions"
        ))),
        Some(v) => numerics::orthogonal_complement(&v, m),
    }
}

/// Per-user complement bases.
#[derive(Clone, Debug)]
pub struct ComplementBasis {
    pub bases: Vec<ComplexMatrix>,
}

/// A fully prepared weighted sum-rate problem.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub config: SystemConfig,
    pub channels: ChannelSet,
    pub masks: ConstraintMasks,
    pub bases: ComplementBasis,
}

impl ProblemInstance {
    pub fn new(config: SystemConfig, channels: ChannelSet) -> Result<Self> {
        config.validate()?;
        let (n, m) = (config.antennas_per_ms, config.total_antennas());
        if channels.channels.len() != config.num_ms
            || channels.channels.iter().any(|h| h.shape() != (n, m))
        {
            return Err(Error::InvalidConfig(format!(
                "channel set does not hold {} matrices of shape {n}x{m}",
                config.num_ms
            )));
        }
        if !channels.channels.iter().all(numerics::is_finite) {
            return Err(Error::InvalidConfig("channels contain NaN or Inf".into()));
        }
        let masks = build_constraint_masks(&config);
        let bases = (0..config.num_ms)
            .map(|k| complement_basis(&channels, k, config.mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            channels,
            masks,
            bases: ComplementBasis { bases },
        })
    }

    pub fn generate(config: SystemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let channels = generate_channels(&config, seed);
        Self::new(config, channels)
    }

    pub fn num_users(&self) -> usize {
        self.config.num_ms
    }

    pub fn num_antennas(&self) -> usize {
        self.config.total_antennas()
    }

    pub fn channel(&self, k: usize) -> &ComplexMatrix {
        &self.channels.channels[k]
    }

    pub fn basis(&self, k: usize) -> &ComplexMatrix {
        &self.bases.bases[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.config.weights[k]
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.config.budgets()
    }

    pub fn protected_users(&self, k: usize) -> Vec<usize> {
        protected_users(self.config.mode, self.num_users(), k)
    }

    /// Lower bound on the number of strictly positive optimal duals in BD
    /// mode: `⌈(M − N(K−1)) / group_size⌉`.
    pub fn min_positive_duals(&self) -> usize {
        let c = &self.config;
        let free = c.total_antennas() - c.antennas_per_ms * (c.num_ms - 1);
        free.div_ceil(c.group_size())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDocument = serde_json::from_str(text)?;
        doc.into_instance()
    }
}

/// JSON form of an instance: config fields by name, channels as nested
/// `[re, im]` arrays (`channels[k][row][col]`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub config: SystemConfig,
    pub seed: u64,
    pub channels: Vec<MatrixPairs>,
}

/// A matrix as rows of `[re, im]` pairs.
pub type MatrixPairs = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_pairs(m: &ComplexMatrix) -> MatrixPairs {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn matrix_from_pairs(rows: &MatrixPairs) -> Result<ComplexMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Contract("ragged matrix rows".into()));
    }
    let entries: Vec<c64> = rows
        .iter()
        .flatten()
        .map(|&[re, im]| c64::new(re, im))
        .collect();
    numerics::from_row_major(rows.len(), cols, &entries)
}

impl From<&ProblemInstance> for InstanceDocument {
    fn from(p: &ProblemInstance) -> Self {
        Self {
            config: p.config.clone(),
            seed: p.channels.seed,
            channels: p.channels.channels.iter().map(matrix_to_pairs).collect(),
        }
    }
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<ProblemInstance> {
        let channels = self
            .channels
            .iter()
            .map(matrix_from_pairs)
            .collect::<Result<Vec<_>>>()?;
        ProblemInstance::new(
            self.config,
            ChannelSet {
                seed: self.seed,
                channels,
            },
        )
    }
}
