use super::LayerSpec;
use crate::error::{Error, Result};

/// Hidden width of the default two-layer category head.
pub const DEFAULT_HEAD_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkPreset {
    pub specs: Vec<LayerSpec>,
    /// Per-sample input shape `[c, h, w]`.
    pub input_shape: Vec<usize>,
}

fn conv_block(specs: &mut Vec<LayerSpec>, channels: usize, kernel: usize, stride: usize) {
    specs.push(LayerSpec::conv(channels, kernel, stride, kernel / 2));
    specs.push(LayerSpec::batch_norm());
    specs.push(LayerSpec::ReLU);
    specs.push(LayerSpec::pool(2, 2));
}

/// Named shared-trunk architectures.
///
/// `modified_alexnet`: five conv blocks (conv, BN, ReLU, 2×2 pool) with
/// widths 96/256/384/384/256, a 7×7 stride-2 first kernel and 3×3 after,
/// then FC 512 and FC 256, for `3×256×256` input.
///
/// `tiny`: two conv blocks (8 and 16 channels) and FC 32, for `1×16×16`.
pub fn preset_trunk(name: &str) -> Result<TrunkPreset> {
    let mut specs = Vec::new();
    let input_shape = match name {
        "modified_alexnet" => {
            conv_block(&mut specs, 96, 7, 2);
            for channels in [256, 384, 384, 256] {
                conv_block(&mut specs, channels, 3, 1);
            }
            specs.extend([
                LayerSpec::fc(512),
                LayerSpec::ReLU,
                LayerSpec::fc(256),
                LayerSpec::ReLU,
            ]);
            vec![3, 256, 256]
        }
        "tiny" => {
            conv_block(&mut specs, 8, 3, 1);
            conv_block(&mut specs, 16, 3, 1);
            specs.extend([LayerSpec::fc(32), LayerSpec::ReLU]);
            vec![1, 16, 16]
        }
        other => {
            return Err(Error::Lookup {
                kind: "trunk preset",
                name: other.to_string(),
            })
        }
    };
    Ok(TrunkPreset { specs, input_shape })
}

/// Fully connected trunk for feature-vector inputs: `FC(w), ReLU` per width.
pub fn mlp_trunk(widths: &[usize]) -> Vec<LayerSpec> {
    widths
        .iter()
        .flat_map(|&w| [LayerSpec::fc(w), LayerSpec::ReLU])
        .collect()
}

/// Category head of `n_fc` fully connected layers with ReLU between them and
/// no terminal activation.
pub fn preset_head(n_fc: usize, widths: &[usize]) -> Result<Vec<LayerSpec>> {
    if n_fc == 0 || widths.is_empty() {
        return Err(Error::Contract("a head needs at least one layer width".into()));
    }
    if widths.len() != n_fc {
        return Err(Error::Contract(format!(
            "{n_fc} FC layers requested but {} widths given",
            widths.len()
        )));
    }
    let mut specs = Vec::with_capacity(2 * n_fc - 1);
    for (i, &w) in widths.iter().enumerate() {
        if i > 0 {
            specs.push(LayerSpec::ReLU);
        }
        specs.push(LayerSpec::fc(w));
    }
    Ok(specs)
}
