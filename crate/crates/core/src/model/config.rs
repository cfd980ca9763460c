use alloc::format;

use crate::numerics::AdamConfig;
use crate::{Error, Result};

/// Which parts of the network run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Friend network resampled from the GAE every `reconstruct_every` epochs.
    Igrm,
    /// Bipartite encoder straight into the head; no friend network.
    Grape,
    /// The initial friend network is kept and aggregated with unit weights.
    NoGae,
    /// Friend network sampled once, at the first epoch.
    OnceGae,
}

impl Mode {
    pub fn uses_gae(self) -> bool {
        matches!(self, Mode::Igrm | Mode::OnceGae)
    }

    pub fn uses_friends(self) -> bool {
        self != Mode::Grape
    }

    /// Whether the friend network is resampled at `epoch`.
    pub fn reconstructs_at(self, epoch: usize, every: usize) -> bool {
        match self {
            Mode::Igrm => epoch % every == 0,
            Mode::OnceGae => epoch == 0,
            Mode::Grape | Mode::NoGae => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Igrm => "igrm",
            Mode::Grape => "grape",
            Mode::NoGae => "no_gae",
            Mode::OnceGae => "once_gae",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub reconstruct_every: usize,
    pub tau: f64,
    pub mode: Mode,
    /// Undirected friend edges drawn per reconstruction; `None` means one per sample.
    pub edge_budget: Option<usize>,
    pub seed: u64,
    pub hidden: usize,
    pub layers: usize,
    /// Share of observed edges used for message passing in each training epoch.
    pub known_fraction: f64,
    /// Test error is computed every this many epochs and after the last one.
    pub eval_every: usize,
    /// Adds a link-reconstruction term for the GAE against the initial network.
    pub gae_aux_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            adam: AdamConfig::default(),
            reconstruct_every: 100,
            tau: 0.5,
            mode: Mode::Igrm,
            edge_budget: None,
            seed: 0,
            hidden: 64,
            layers: 3,
            known_fraction: 0.7,
            eval_every: 100,
            gae_aux_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if self.reconstruct_every == 0 {
            return bad("reconstruct_every must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.tau));
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("hidden width and layer count must be positive".into());
        }
        if !(self.known_fraction > 0.0 && self.known_fraction <= 1.0) {
            return bad(format!("known_fraction must lie in (0, 1], got {}", self.known_fraction));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.edge_budget == Some(0) {
            return bad("edge budget must be at least 1".into());
        }
        if !(self.adam.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.adam.lr));
        }
        Ok(())
    }

    /// Number of resampling passes over a full run.
    pub fn expected_reconstructions(&self) -> usize {
        match self.mode {
            Mode::Igrm => self.epochs.div_ceil(self.reconstruct_every),
            Mode::OnceGae => usize::from(self.epochs > 0),
            Mode::Grape | Mode::NoGae => 0,
        }
    }
}
