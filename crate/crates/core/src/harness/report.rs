use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::archspace::{count_cost_with, resolve_channels, Branch, ExpansionCode, LayerKind, NetworkTemplate, Precision, Ratio};
use crate::evosearch::SearchLogRecord;
use crate::io_util;
use crate::{Error, Result};

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const CHANNELS_CSV: &str = "channels.csv";
pub const COSTS_CSV: &str = "costs.csv";

/// One row per generation. `best_*` track the best individual seen so far, so
/// `best_fitness` never decreases down the file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_acc: f64,
    pub best_flops_norm: f64,
    pub best_code: String,
}

pub fn generation_rows(log: &[SearchLogRecord]) -> Vec<GenerationRow> {
    let mut by_gen: BTreeMap<usize, Vec<&SearchLogRecord>> = BTreeMap::new();
    for r in log {
        by_gen.entry(r.generation).or_default().push(r);
    }
    let mut best: Option<&SearchLogRecord> = None;
    let mut rows = Vec::with_capacity(by_gen.len());
    for (generation, records) in by_gen {
        for &r in &records {
            if best.is_none_or(|b| r.fitness > b.fitness) {
                best = Some(r);
            }
        }
        let b = best.expect("generation has records");
        rows.push(GenerationRow {
            generation,
            best_fitness: b.fitness,
            mean_fitness: records.iter().map(|r| r.fitness).sum::<f64>() / records.len() as f64,
            best_acc: b.acc,
            best_flops_norm: b.flops_norm,
            best_code: b.code.to_string(),
        });
    }
    rows
}

/// Widths of every conv / fc layer under `code` next to the uniform 1×–4× widths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelRow {
    pub layer: String,
    pub kind: LayerKind,
    pub branch: Branch,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out_uniform_1x: usize,
    pub out_uniform_2x: usize,
    pub out_uniform_3x: usize,
    pub out_uniform_4x: usize,
}

pub fn channel_rows(template: &NetworkTemplate, code: &ExpansionCode) -> Result<Vec<ChannelRow>> {
    let uniform = |r: Ratio| resolve_channels(template, &ExpansionCode::uniform(r, template.n_genes));
    let searched = resolve_channels(template, code)?;
    let u = [uniform(Ratio::ONE)?, uniform(Ratio::TWO)?, uniform(Ratio::THREE)?, uniform(Ratio::FOUR)?];
    Ok(searched
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l.kind, LayerKind::Conv | LayerKind::Fc))
        .map(|(i, l)| ChannelRow {
            layer: l.name.clone(),
            kind: l.kind,
            branch: l.branch,
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            out_uniform_1x: u[0][i].out_channels,
            out_uniform_2x: u[1][i].out_channels,
            out_uniform_3x: u[2][i].out_channels,
            out_uniform_4x: u[3][i].out_channels,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub model: String,
    pub precision: Precision,
    pub code: String,
    pub flops: f64,
    pub flops_norm: f64,
    pub speedup: f64,
    pub weight_bits: u64,
}

/// Cost of the full-precision 1× network, binary uniform 1×–4×, and `best` if given.
pub fn cost_rows(template: &NetworkTemplate, best: Option<&ExpansionCode>) -> Result<Vec<CostRow>> {
    let n = template.n_genes;
    let mut models = vec![("fp_1x".to_string(), ExpansionCode::uniform(Ratio::ONE, n), Precision::Full)];
    for r in [Ratio::ONE, Ratio::TWO, Ratio::THREE, Ratio::FOUR] {
        models.push((format!("binary_{r}x"), ExpansionCode::uniform(r, n), Precision::Binary));
    }
    if let Some(code) = best {
        models.push(("searched".to_string(), code.clone(), Precision::Binary));
    }
    models
        .into_iter()
        .map(|(model, code, precision)| {
            let c = count_cost_with(template, &code, precision)?;
            Ok(CostRow {
                model,
                precision,
                code: code.to_string(),
                flops: c.flops,
                flops_norm: c.flops_norm,
                speedup: c.speedup,
                weight_bits: c.weight_bits,
            })
        })
        .collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes the channel and cost tables for `code` into `dir`, plus the per-generation
/// table when a search log is given.
pub fn write_reports(
    dir: &Path,
    template: &NetworkTemplate,
    log: Option<&[SearchLogRecord]>,
    best: &ExpansionCode,
) -> Result<()> {
    if let Some(log) = log {
        io_util::write_atomic(&dir.join(GENERATIONS_CSV), to_csv(&generation_rows(log))?.as_bytes())?;
    }
    io_util::write_atomic(&dir.join(CHANNELS_CSV), to_csv(&channel_rows(template, best)?)?.as_bytes())?;
    io_util::write_atomic(&dir.join(COSTS_CSV), to_csv(&cost_rows(template, Some(best))?)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::vgg_small_mini;

    fn record(generation: usize, index: usize, fitness: f64) -> SearchLogRecord {
        SearchLogRecord {
            generation,
            index,
            code: ExpansionCode::uniform(Ratio::ONE, 5),
            acc: fitness,
            flops: 1.0,
            flops_norm: 1.0,
            fitness,
            eval_seed: 0,
            elite: false,
            diverged: false,
            wall_time: 0.0,
        }
    }

    #[test]
    fn best_fitness_is_running_maximum() {
        let log = vec![record(0, 0, 5.0), record(0, 1, 3.0), record(1, 0, 4.0), record(1, 1, 2.0), record(2, 0, 7.0)];
        let rows = generation_rows(&log);
        let best: Vec<f64> = rows.iter().map(|r| r.best_fitness).collect();
        assert_eq!(best, vec![5.0, 5.0, 7.0]);
        assert_eq!(rows[1].mean_fitness, 3.0);
    }

    #[test]
    fn channel_table_lists_weighted_layers() {
        let t = vgg_small_mini();
        let code = ExpansionCode::from_f64s(&[0.5, 1.0, 2.0, 4.0, 0.25]).unwrap();
        let rows = channel_rows(&t, &code).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].out_channels, 4);
        assert_eq!(rows[0].out_uniform_3x, 24);
        assert_eq!(rows[5].out_channels, 10);
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with("layer,kind,branch,in_channels,out_channels,out_uniform_1x"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn cost_table_has_reference_rows() {
        let rows = cost_rows(&vgg_small_mini(), None).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[1].flops_norm, 1.0);
        assert!(rows[0].flops > rows[1].flops);
    }
}
