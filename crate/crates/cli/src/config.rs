//! Experiment configuration read from TOML.
//!
//! One file describes a grid of systems (codes x channels x message sizes)
//! plus the settings each subcommand needs. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlf_core::bounds::BoundMethod;
use vlf_core::channel::ChannelSpec;
use vlf_core::crc::CrcPoly;
use vlf_core::trellis::{GeneratorSet, TerminationMode};
use vlf_core::vlfsim::{AfterFinal, StoppingPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Message sizes in information bits.
    pub k: KList,
    #[serde(default)]
    pub codes: Vec<CodeConfig>,
    #[serde(default)]
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

/// Either an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KList {
    List(Vec<usize>),
    Range { from: usize, to: usize, step: usize },
}

impl KList {
    pub fn values(&self) -> Vec<usize> {
        match self {
            KList::List(v) => v.clone(),
            KList::Range { from, to, step } => (*from..=*to).step_by((*step).max(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    /// 64, 256 or 1024 select the built-in generators.
    #[serde(default)]
    pub states: Option<usize>,
    #[serde(default)]
    pub memory: Option<u32>,
    /// Octal generators; requires `memory`.
    #[serde(default)]
    pub polys: Option<[String; 3]>,
    #[serde(default = "default_mode")]
    pub mode: ModeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[serde(alias = "tailbiting")]
    TailBiting,
    Terminated,
}

fn default_mode() -> ModeConfig {
    ModeConfig::TailBiting
}

impl From<ModeConfig> for TerminationMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::TailBiting => TerminationMode::TailBiting,
            ModeConfig::Terminated => TerminationMode::Terminated,
        }
    }
}

impl CodeConfig {
    pub fn generators(&self) -> Result<GeneratorSet> {
        if let Some(polys) = &self.polys {
            let memory = self.memory.context("`polys` needs `memory`")?;
            let g = GeneratorSet::from_octal(memory, [&polys[0], &polys[1], &polys[2]])?;
            if let Some(s) = self.states {
                if s != g.num_states() {
                    bail!("states = {s} disagrees with memory = {memory}");
                }
            }
            return Ok(g);
        }
        let states = match (self.states, self.memory) {
            (Some(s), None) => s,
            (None, Some(m)) => 1usize << m,
            (Some(s), Some(m)) if s == 1usize << m => s,
            (Some(s), Some(m)) => bail!("states = {s} disagrees with memory = {m}"),
            (None, None) => bail!("give `states` or `memory`"),
        };
        Ok(match states {
            64 => GeneratorSet::nu6(),
            256 => GeneratorSet::nu8(),
            1024 => GeneratorSet::nu10(),
            s => bail!("no built-in code with {s} states; give `memory` and `polys`"),
        })
    }

    pub fn mode(&self) -> TerminationMode {
        self.mode.into()
    }

    /// Short label such as `64-tb` used in unit keys and file names.
    pub fn label(&self) -> Result<String> {
        let g = self.generators()?;
        let m = match self.mode {
            ModeConfig::TailBiting => "tb",
            ModeConfig::Terminated => "term",
        };
        Ok(format!("{}-{m}", g.num_states()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelConfig {
    Bsc { p: f64 },
    Biawgn { snr_db: f64 },
}

impl ChannelConfig {
    pub fn spec(&self) -> Result<ChannelSpec> {
        Ok(match *self {
            ChannelConfig::Bsc { p } => ChannelSpec::bsc(p)?,
            ChannelConfig::Biawgn { snr_db } => ChannelSpec::biawgn_db(snr_db)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelConfig::Bsc { .. } => "bsc",
            ChannelConfig::Biawgn { .. } => "biawgn",
        }
    }

    /// Crossover probability or SNR in dB, as written in the config.
    pub fn param(&self) -> f64 {
        match *self {
            ChannelConfig::Bsc { p } => p,
            ChannelConfig::Biawgn { snr_db } => snr_db,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ChannelConfig::Bsc { p } => format!("bsc{p}"),
            ChannelConfig::Biawgn { snr_db } => format!("awgn{snr_db}dB"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Reliability,
    Crc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfterFinalConfig {
    Repeat,
    DeclareError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Target error probability; also used by bounds and optimize.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub poly: Option<CrcPoly>,
    #[serde(default = "default_after_final")]
    pub after_final: AfterFinalConfig,
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_after_final() -> AfterFinalConfig {
    AfterFinalConfig::Repeat
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::Reliability,
            epsilon: default_epsilon(),
            poly: None,
            after_final: default_after_final(),
        }
    }
}

impl PolicyConfig {
    pub fn stopping_policy(&self) -> Result<StoppingPolicy> {
        let p = match self.kind {
            PolicyKind::Reliability => StoppingPolicy::reliability(self.epsilon),
            PolicyKind::Crc => StoppingPolicy::crc(self.poly.context("policy.kind = \"crc\" needs policy.poly")?),
        };
        Ok(match self.after_final {
            AfterFinalConfig::Repeat => p,
            AfterFinalConfig::DeclareError => p.declaring_errors(),
        })
    }

    pub fn after_final(&self) -> AfterFinal {
        match self.after_final {
            AfterFinalConfig::Repeat => AfterFinal::RepeatForever,
            AfterFinalConfig::DeclareError => AfterFinal::DeclareError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Decode after every received symbol.
    EverySymbol,
    /// Explicit transmission lengths per code and message size.
    Lengths,
    /// The fixed five-transmission rule scaled by the encoder input length.
    Heuristic,
    /// Lengths chosen by the optimizer (see `[optimize]`).
    Optimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_schedule_kind")]
    pub kind: ScheduleKind,
    /// Seed of the puncturing permutation.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keys are `"<states>/<k>"` or just `"<k>"`; values are `I_1..I_m`.
    #[serde(default)]
    pub lengths: BTreeMap<String, Vec<usize>>,
}

fn default_schedule_kind() -> ScheduleKind {
    ScheduleKind::EverySymbol
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { kind: default_schedule_kind(), seed: default_seed(), lengths: BTreeMap::new() }
    }
}

impl ScheduleConfig {
    /// Explicit lengths for a code with `states` states at message size `k`.
    pub fn lengths_for(&self, states: usize, k: usize) -> Option<&Vec<usize>> {
        self.lengths.get(&format!("{states}/{k}")).or_else(|| self.lengths.get(&k.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_min_errors")]
    pub min_errors: Option<u64>,
    #[serde(default)]
    pub min_declared: Option<u64>,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: u32,
    /// Seconds between checkpoint writes.
    #[serde(default = "default_checkpoint_secs")]
    pub checkpoint_secs: u64,
}

fn default_min_errors() -> Option<u64> {
    Some(100)
}

fn default_max_trials() -> u64 {
    10_000_000
}

fn default_max_blocks() -> u32 {
    1000
}

fn default_checkpoint_secs() -> u64 {
    30
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            min_errors: default_min_errors(),
            min_declared: None,
            max_trials: default_max_trials(),
            max_blocks: default_max_blocks(),
            checkpoint_secs: default_checkpoint_secs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<BoundMethod>,
    #[serde(default = "default_walks")]
    pub walks: u64,
    /// Overrides the top-level `k` list.
    #[serde(default)]
    pub k: Option<KList>,
    /// Repetition period of the repeat-after-N bound in units of `k`.
    #[serde(default = "default_repeat_factor")]
    pub repeat_factor: usize,
}

fn default_methods() -> Vec<BoundMethod> {
    vec![BoundMethod::Wald, BoundMethod::MonteCarlo]
}

fn default_walks() -> u64 {
    vlf_core::bounds::DEFAULT_WALKS
}

fn default_repeat_factor() -> usize {
    3
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { methods: default_methods(), walks: default_walks(), k: None, repeat_factor: default_repeat_factor() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_min_triggers")]
    pub min_triggers: u64,
    #[serde(default = "default_grid_trials")]
    pub max_grid_trials: u64,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Upper limit on `N_m`.
    #[serde(default)]
    pub cap: Option<usize>,
    /// Require `P_re(N_m)` below this value.
    #[serde(default)]
    pub final_below: Option<f64>,
    /// Also run the exhaustive search (only sensible for small `m`).
    #[serde(default)]
    pub check_exhaustive: bool,
    /// Use a closed-form model instead of simulating the grid.
    #[serde(default)]
    pub synthetic: Option<SyntheticModel>,
}

fn default_m() -> usize {
    5
}

fn default_restarts() -> usize {
    vlf_core::lenopt::DEFAULT_RESTARTS
}

fn default_min_triggers() -> u64 {
    vlf_core::lenopt::DEFAULT_MIN_TRIGGERS
}

fn default_grid_trials() -> u64 {
    2_000_000
}

fn default_degree() -> usize {
    vlf_core::lenopt::DEFAULT_DEGREE
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            m: default_m(),
            restarts: default_restarts(),
            min_triggers: default_min_triggers(),
            max_grid_trials: default_grid_trials(),
            degree: default_degree(),
            cap: None,
            final_below: None,
            check_exhaustive: false,
            synthetic: None,
        }
    }
}

/// `P_re(N) = min(1, exp(-rate (N - offset k)))` on `N` in `1..=3k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub rate: f64,
    pub offset: f64,
}

impl SyntheticModel {
    pub fn probs(&self, k: usize) -> Vec<f64> {
        let shift = self.offset * k as f64;
        (1..=3 * k).map(|n| (-self.rate * (n as f64 - shift)).exp().min(1.0)).collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let ks = self.k.values();
        if ks.is_empty() || ks.contains(&0) {
            bail!("k: need at least one positive message size");
        }
        for (i, c) in self.codes.iter().enumerate() {
            c.generators().with_context(|| format!("codes[{i}]"))?;
        }
        for (i, c) in self.channels.iter().enumerate() {
            c.spec().with_context(|| format!("channels[{i}]"))?;
        }
        if !(self.policy.epsilon > 0.0 && self.policy.epsilon <= 1.0) {
            bail!("policy.epsilon: {} is outside (0, 1]", self.policy.epsilon);
        }
        self.policy.stopping_policy().context("policy")?;
        for (key, v) in &self.schedule.lengths {
            let ok = key.split('/').all(|p| p.parse::<usize>().is_ok()) && key.split('/').count() <= 2;
            if !ok {
                bail!("schedule.lengths: key {key:?} is not \"<states>/<k>\" or \"<k>\"");
            }
            if v.is_empty() || v.contains(&0) {
                bail!("schedule.lengths.\"{key}\": lengths must be positive");
            }
        }
        if self.schedule.kind == ScheduleKind::Lengths {
            for c in &self.codes {
                let states = c.generators()?.num_states();
                for &k in &ks {
                    if self.schedule.lengths_for(states, k).is_none() {
                        bail!("schedule.lengths: nothing for {states}-state code at k = {k}");
                    }
                }
            }
        }
        if self.campaign.max_trials == 0 {
            bail!("campaign.max_trials must be positive");
        }
        if self.campaign.max_blocks == 0 {
            bail!("campaign.max_blocks must be positive");
        }
        if self.bounds.walks < 2 {
            bail!("bounds.walks must be at least 2");
        }
        if self.optimize.m == 0 || self.optimize.restarts == 0 {
            bail!("optimize: m and restarts must be positive");
        }
        if let Some(b) = self.optimize.final_below {
            if !(b > 0.0 && b < 1.0) {
                bail!("optimize.final_below: {b} is outside (0, 1)");
            }
        }
        if let Some(s) = self.optimize.synthetic {
            if !(s.rate > 0.0 && s.rate.is_finite()) {
                bail!("optimize.synthetic.rate must be positive");
            }
        }
        Ok(())
    }

    /// Canonical TOML with the output directory removed.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        hex16(self.canonical().as_bytes())
    }

    /// Hash of everything that determines per-trial outcomes, so a
    /// checkpoint stays valid when only the stopping rule changes.
    pub fn resume_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.campaign = CampaignConfig::default();
        c.bounds = BoundsConfig::default();
        c.description.clear();
        hex16(toml::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn hex16(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
