use super::network::param_shapes;
use super::template::NetworkTemplate;
use super::{ExpansionCode, Ratio};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::{Error, Result};

/// Initializes the network for `code` from a trained uniformly-4× supernet by keeping
/// the leading channels of every array (both input and output channel axes, and the
/// channel axis of batch-norm arrays). Axes that do not depend on the code are copied
/// whole.
pub fn inherit_weights(supernet: &Checkpoint, template: &NetworkTemplate, code: &ExpansionCode) -> Result<Checkpoint> {
    if supernet.meta.template != template.name {
        return Err(Error::Input(format!(
            "supernet was trained for {}, not {}",
            supernet.meta.template, template.name
        )));
    }
    if supernet.meta.code != ExpansionCode::uniform(Ratio::FOUR, template.n_genes) {
        return Err(Error::Input(format!(
            "supernet code {} is not the uniform 4x code",
            supernet.meta.code
        )));
    }
    let mut out = Checkpoint::new(CheckpointMeta {
        template: template.name.clone(),
        code: code.clone(),
        seed: supernet.meta.seed,
        precision: supernet.meta.precision,
    });
    for (name, dims) in param_shapes(template, code)? {
        let src = supernet
            .get(&name)
            .ok_or_else(|| Error::Input(format!("supernet lacks {name}")))?;
        if src.rank() != dims.len() || src.dims().iter().zip(&dims).any(|(s, d)| d > s) {
            return Err(Error::Input(format!(
                "{name}: target {dims:?} exceeds supernet {:?}",
                src.dims()
            )));
        }
        out.push(name, src.prefix_slice(&dims)?)?;
    }
    Ok(out)
}
