use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Pyramid depth `N`: the encoder downsamples by `2^N` and the head
    /// predicts `4^N` channels per cell.
    pub depth: u32,
    pub stage_channels: Vec<usize>,
    /// Local (window) partition size.
    pub block: usize,
    /// Global (grid) partition size.
    pub grid: usize,
    pub head_hidden: usize,
    pub se_reduction: usize,
    pub expansion: usize,
    /// Whether each stage carries a residual MLP attention block.
    pub rmab: bool,
    pub in_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 3,
            stage_channels: vec![32, 64, 128],
            block: 8,
            grid: 8,
            head_hidden: 512,
            se_reduction: 4,
            expansion: 2,
            rmab: true,
            in_channels: 1,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth == 0 || self.depth > 4 {
            return bad(format!("depth must be in 1..=4, got {}", self.depth));
        }
        if self.stage_channels.len() != self.depth as usize {
            return bad(format!(
                "{} stage widths given for depth {}",
                self.stage_channels.len(),
                self.depth
            ));
        }
        if self.block == 0 || self.grid == 0 || self.head_hidden == 0 || self.expansion == 0 {
            return bad("extents must be positive".into());
        }
        if self.in_channels == 0 {
            return bad("input needs at least one channel".into());
        }
        if self.se_reduction == 0 {
            return bad("SE reduction must be positive".into());
        }
        for &c in &self.stage_channels {
            if c < 2 || c % 2 != 0 {
                return bad(format!("stage width {c} must be even and positive"));
            }
            if c % self.se_reduction != 0 {
                return bad(format!("stage width {c} not divisible by SE reduction {}", self.se_reduction));
            }
        }
        Ok(())
    }

    /// Downsampling factor `2^N`, also the side of one detection cell.
    pub fn cell(&self) -> usize {
        1 << self.depth
    }

    /// Head output channels `4^N`.
    pub fn head_channels(&self) -> usize {
        self.cell() * self.cell()
    }

    pub fn last_channels(&self) -> usize {
        *self.stage_channels.last().expect("validated")
    }

    /// Input extents must be multiples of this (`2^N · lcm(b, g)`).
    pub fn size_multiple(&self) -> usize {
        let l = self.block / gcd(self.block, self.grid) * self.grid;
        self.cell() * l
    }

    /// A small configuration for tests and quick experiments.
    pub fn tiny() -> Self {
        ModelConfig {
            depth: 2,
            stage_channels: vec![8, 16],
            block: 4,
            grid: 4,
            head_hidden: 32,
            se_reduction: 4,
            expansion: 2,
            rmab: true,
            in_channels: 1,
        }
    }
}
