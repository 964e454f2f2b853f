//! Parameter and multiply-accumulate accounting.
//!
//! Conventions: one multiply-accumulate = 1 MAC. Convolutions count
//! k²·Cin·Cout·H'·W', linear maps din·dout·tokens, attention counts the
//! per-window QKᵀ and AV contractions. Biases, norms, activations and
//! softmax are excluded from MACs.

use serde::Serialize;

use crate::error::{Error, Result};

/// One layer kind with the hyperparameters that determine its cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Linear {
        din: usize,
        dout: usize,
    },
    LayerNorm {
        d: usize,
    },
    Gelu,
    PixelShuffle {
        r: usize,
    },
    Pool {
        k: usize,
    },
    Upsample {
        factor: usize,
    },
}

impl LayerSpec {
    pub fn params(&self) -> u64 {
        match *self {
            LayerSpec::Conv2d { cin, cout, k, .. } => (k * k * cin * cout + cout) as u64,
            LayerSpec::Linear { din, dout } => (din * dout + dout) as u64,
            LayerSpec::LayerNorm { d } => 2 * d as u64,
            _ => 0,
        }
    }

    /// MACs and output shape for an `[N, C, H, W]` input.
    pub fn macs(&self, input: &[usize; 4]) -> Result<(u64, [usize; 4])> {
        let &[n, c, h, w] = input;
        match *self {
            LayerSpec::Conv2d {
                cin,
                cout,
                k,
                stride,
                pad,
            } => {
                if c != cin {
                    return Err(Error::invalid(
                        "cost",
                        format!("conv expects {cin} channels, input has {c}"),
                    ));
                }
                if h + 2 * pad < k || w + 2 * pad < k {
                    return Err(Error::invalid("cost", "kernel does not fit input"));
                }
                let oh = (h + 2 * pad - k) / stride + 1;
                let ow = (w + 2 * pad - k) / stride + 1;
                let macs = (k * k * cin * cout) as u64 * (n * oh * ow) as u64;
                Ok((macs, [n, cout, oh, ow]))
            }
            LayerSpec::Linear { din, dout } => {
                if c != din {
                    return Err(Error::invalid(
                        "cost",
                        format!("linear expects {din} channels, input has {c}"),
                    ));
                }
                let tokens = (n * h * w) as u64;
                Ok(((din * dout) as u64 * tokens, [n, dout, h, w]))
            }
            LayerSpec::LayerNorm { d } => {
                if c != d {
                    return Err(Error::invalid("cost", "layer-norm width mismatch"));
                }
                Ok((0, [n, c, h, w]))
            }
            LayerSpec::Gelu => Ok((0, [n, c, h, w])),
            LayerSpec::PixelShuffle { r } => {
                if c % (r * r) != 0 {
                    return Err(Error::invalid("cost", "pixel-shuffle channel divisibility"));
                }
                Ok((0, [n, c / (r * r), h * r, w * r]))
            }
            LayerSpec::Pool { k } => Ok((0, [n, c, h / k, w / k])),
            LayerSpec::Upsample { factor } => Ok((0, [n, c, h * factor, w * factor])),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CostItem {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

/// Per-layer cost breakdown; totals are always the sum of the entries.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CostReport {
    pub items: Vec<CostItem>,
}

impl CostReport {
    pub fn new() -> Self {
        CostReport { items: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, params: u64, macs: u64) {
        self.items.push(CostItem {
            name: name.into(),
            params,
            macs,
        });
    }

    pub fn total_params(&self) -> u64 {
        self.items.iter().map(|i| i.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.items.iter().map(|i| i.macs).sum()
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .items
            .iter()
            .map(|i| i.name.len())
            .chain(["layer".len(), "TOTAL".len()])
            .max()
            .unwrap_or(5);
        out.push_str(&format!("{:<name_w$}  {:>14}  {:>16}\n", "layer", "params", "MACs"));
        for item in &self.items {
            out.push_str(&format!(
                "{:<name_w$}  {:>14}  {:>16}\n",
                item.name, item.params, item.macs
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:>14}  {:>16}\n",
            "TOTAL",
            self.total_params(),
            self.total_macs()
        ));
        out.push_str(&format!(
            "params: {:.3} M, MACs: {:.3} G\n",
            self.total_params() as f64 / 1e6,
            self.total_macs() as f64 / 1e9
        ));
        out
    }

    /// Machine-readable tab-separated form: `layer\tparams\tmacs`.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("layer\tparams\tmacs\n");
        for item in &self.items {
            out.push_str(&format!("{}\t{}\t{}\n", item.name, item.params, item.macs));
        }
        out.push_str(&format!(
            "TOTAL\t{}\t{}\n",
            self.total_params(),
            self.total_macs()
        ));
        out
    }
}
