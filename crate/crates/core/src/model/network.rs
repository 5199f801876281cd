use super::config::ModelConfig;
use crate::blocks::{depth_to_space_var, Block, BoundParams, ChannelMlp, Dense, InitKind, MultiAxisGmlp, ParamSpec, Rmab};
use crate::error::Result;
use crate::tensorgrad::{Graph, Real, Var};

/// Per-cell detection module: `dense(C→hidden) → GELU → dense(hidden→4^N)`,
/// channel softmax, then depth-to-space to full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionHead {
    pub depth: u32,
    pub fc1: Dense,
    pub fc2: Dense,
}

impl DetectionHead {
    pub fn new(name: &str, c: usize, hidden: usize, depth: u32) -> Self {
        let cr = 1usize << (2 * depth);
        DetectionHead {
            depth,
            fc1: Dense::new(format!("{name}.fc1"), c, hidden),
            fc2: Dense::new(format!("{name}.fc2"), hidden, cr),
        }
    }

    /// Pre-softmax logits `[H', W', 4^N]`.
    pub fn logits<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let h = g.gelu(&self.fc1.forward(g, p, x)?);
        self.fc2.forward(g, p, &h)
    }

    /// Softmax over channels followed by depth-to-space.
    pub fn response_from_logits<R: Real>(&self, g: &Graph<R>, logits: &Var<R>) -> Result<Var<R>> {
        let s = g.softmax_channels(logits);
        depth_to_space_var(g, &s, self.depth)
    }
}

impl Block for DetectionHead {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.fc1.specs();
        // Zero output weights: the untrained response is exactly uniform.
        s.extend(self.fc2.specs().into_iter().map(|mut p| {
            p.init = InitKind::Const(0.0);
            p
        }));
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let l = self.logits(g, p, x)?;
        self.response_from_logits(g, &l)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub cmlp: ChannelMlp,
    pub gmlp: MultiAxisGmlp,
    pub rmab: Option<Rmab>,
}

impl Block for Stage {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.cmlp.specs();
        s.extend(self.gmlp.specs());
        if let Some(r) = &self.rmab {
            s.extend(r.specs());
        }
        s
    }

    /// Runs the stage at full stage resolution, then halves it.
    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let mut h = self.cmlp.forward(g, p, x)?;
        h = self.gmlp.forward(g, p, &h)?;
        if let Some(r) = &self.rmab {
            h = r.forward(g, p, &h)?;
        }
        g.maxpool2(&h)
    }
}

/// The full architecture, independent of parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub stem: ChannelMlp,
    pub stages: Vec<Stage>,
    pub head: DetectionHead,
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c1 = config.stage_channels[0];
        let stem = ChannelMlp::stem("stem", config.in_channels, c1);
        let mut stages = Vec::with_capacity(config.stage_channels.len());
        let mut cin = c1;
        for (k, &c) in config.stage_channels.iter().enumerate() {
            let name = format!("stage{}", k + 1);
            stages.push(Stage {
                cmlp: ChannelMlp::new(format!("{name}.cmlp"), cin, c, config.expansion),
                gmlp: MultiAxisGmlp::new(format!("{name}.gmlp"), c, config.block, config.grid)?,
                rmab: if config.rmab {
                    Some(Rmab::new(format!("{name}.rmab"), c, config.expansion, config.se_reduction)?)
                } else {
                    None
                },
            });
            cin = c;
        }
        let head = DetectionHead::new("head", config.last_channels(), config.head_hidden, config.depth);
        Ok(Network { stem, stages, head })
    }

    /// `[H, W, C_in] → [H/2^N, W/2^N, C_last]`.
    pub fn encode<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let mut h = self.stem.forward(g, p, x)?;
        for s in &self.stages {
            h = s.forward(g, p, &h)?;
        }
        Ok(h)
    }
}

impl Block for Network {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.stem.specs();
        for st in &self.stages {
            s.extend(st.specs());
        }
        s.extend(self.head.specs());
        s
    }

    /// Image to full-resolution response `[H, W, 1]`; extents must already
    /// satisfy the divisibility contract.
    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let f = self.encode(g, p, x)?;
        self.head.forward(g, p, &f)
    }
}
