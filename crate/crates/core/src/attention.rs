//! Bottleneck attention gate: channel attention followed by spatial
//! attention, combined as `z = X ⊗ A_s(X ⊗ A_c(X))` and injected back through
//! a learnable scalar gate, `X' = X + γ·z`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Bound, Conv, ParamStore};
use crate::tensor::{Tensor, Var};

pub const GAMMA: &str = "att.gamma";

/// Shape of the attention gate. Parameters live in a [`ParamStore`] under
/// `att.ch_mlp.{0,1}.*`, `att.sp_conv.*` and `att.gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGate {
    pub channels: usize,
    /// Hidden width of the channel MLP is `channels / reduction`.
    pub reduction: usize,
    /// Odd side of the spatial kernel; padded to keep the plane size.
    pub spatial_kernel: usize,
}

impl AttentionGate {
    pub fn new(channels: usize, reduction: usize, spatial_kernel: usize) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 || channels / reduction == 0 {
            return Err(Error::Config(format!(
                "attention channels ({channels}) must be a positive multiple of the reduction ratio ({reduction})"
            )));
        }
        if spatial_kernel % 2 == 0 {
            return Err(Error::Config(format!("spatial kernel must be odd, got {spatial_kernel}")));
        }
        Ok(AttentionGate { channels, reduction, spatial_kernel })
    }

    fn mlp(&self) -> [Conv; 2] {
        let hidden = self.channels / self.reduction;
        [
            Conv::new("att.ch_mlp.0", self.channels, hidden, 1),
            Conv::new("att.ch_mlp.1", hidden, self.channels, 1),
        ]
    }

    fn spatial_conv(&self) -> Conv {
        Conv::new("att.sp_conv", 2, 1, self.spatial_kernel)
    }

    /// Parameter names and shapes in checkpoint order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self.mlp().iter().flat_map(Conv::shapes).collect();
        out.extend(self.spatial_conv().shapes());
        out.push((GAMMA.to_string(), vec![1]));
        out
    }

    pub fn init(&self, store: &mut ParamStore, gamma: f64, rng: &mut impl Rng) {
        for conv in self.mlp() {
            conv.init(store, rng);
        }
        self.spatial_conv().init(store, rng);
        store.insert(GAMMA, Tensor::scalar(gamma));
    }

    /// `σ(MLP(avgpool(x)) + MLP(maxpool(x)))`, shape `[B, C, 1, 1]`.
    pub fn channel_attention<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        check_input(&x, self.channels)?;
        let [l0, l1] = self.mlp();
        let mlp = |v: Var<'g>| -> Result<Var<'g>> { l1.forward(p, l0.forward(p, v)?.relu()) };
        let avg = mlp(x.mean_axes(&[2, 3])?)?;
        let max = mlp(x.max_axes(&[2, 3])?)?;
        Ok(avg.add(max)?.sigmoid())
    }

    /// `σ(conv_k([mean_c(x); max_c(x)]))`, shape `[B, 1, H, W]`.
    pub fn spatial_attention<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.value().dims4()?;
        let pooled = x.graph().concat(&[x.mean_axes(&[1])?, x.max_axes(&[1])?], 1)?;
        Ok(self.spatial_conv().forward(p, pooled)?.sigmoid())
    }

    /// Gated module output `X + γ·(X ⊗ A_s(X ⊗ A_c(X)))`.
    pub fn attend<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let refined = x.mul(self.channel_attention(p, x)?)?;
        let z = x.mul(self.spatial_attention(p, refined)?)?;
        x.add(z.mul(p.get(GAMMA)?)?)
    }
}

fn check_input(x: &Var, channels: usize) -> Result<()> {
    let (_, c, _, _) = x.value().dims4()?;
    if c != channels {
        return Err(Error::dim("channels", format!("attention gate built for {channels} channels, got {c}")));
    }
    Ok(())
}
