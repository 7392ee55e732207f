use serde::{Deserialize, Serialize};

use super::Individual;
use crate::archspace::ExpansionCode;
use crate::{Error, Result};

/// One line of the search log. Every generation lists all of its members; carried
/// elites repeat their original evaluation with `elite` set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchLogRecord {
    pub generation: usize,
    pub index: usize,
    pub code: ExpansionCode,
    pub acc: f64,
    pub flops: f64,
    pub flops_norm: f64,
    pub fitness: f64,
    pub eval_seed: u64,
    pub elite: bool,
    pub diverged: bool,
    /// Seconds spent evaluating this candidate; 0 for carried elites.
    pub wall_time: f64,
}

impl SearchLogRecord {
    pub fn new(generation: usize, index: usize, ind: &Individual, elite: bool, wall_time: f64) -> Self {
        Self {
            generation,
            index,
            code: ind.code.clone(),
            acc: ind.acc,
            flops: ind.cost.flops,
            flops_norm: ind.cost.flops_norm,
            fitness: ind.fitness,
            eval_seed: ind.eval_seed,
            elite,
            diverged: ind.diverged,
            wall_time,
        }
    }
}

/// JSON lines, one record per line, each terminated by `\n`.
pub fn write_log_lines(records: &[SearchLogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

/// Parses a log written by [`write_log_lines`]. Any malformed line is reported as
/// corruption with its 1-based line number.
pub fn parse_log(text: &str) -> Result<Vec<SearchLogRecord>> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::Corrupt("search log does not end with a newline".into()));
    }
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Corrupt(format!("search log line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(g: usize, i: usize) -> SearchLogRecord {
        SearchLogRecord {
            generation: g,
            index: i,
            code: ExpansionCode::from_f64s(&[0.25, 4.0]).unwrap(),
            acc: 91.25,
            flops: 123456.5,
            flops_norm: 1.0 / 3.0,
            fitness: 89.91666666666667,
            eval_seed: u64::MAX,
            elite: false,
            diverged: false,
            wall_time: 0.5,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let recs = vec![record(0, 0), record(0, 1)];
        let text = write_log_lines(&recs);
        assert!(text.starts_with(r#"{"generation":0,"index":0,"code":[0.25,4],"acc":91.25,"#));
        assert_eq!(parse_log(&text).unwrap(), recs);
        assert_eq!(write_log_lines(&parse_log(&text).unwrap()), text);
    }

    #[test]
    fn corruption_is_reported() {
        let text = write_log_lines(&[record(0, 0)]);
        assert!(matches!(parse_log(&text[..text.len() - 5]), Err(Error::Corrupt(_))));
        let err = parse_log(&format!("{text}{{\"generation\":1}}\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_log("").unwrap().is_empty());
    }
}
