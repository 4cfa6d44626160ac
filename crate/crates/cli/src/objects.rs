//! Object and free-set input files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qres::freesets::FreeSetSpec;
use qres::quantum::{depolarizing, identity_channel, truncated_cv_state, CvState};
use qres::{ChoiChannel, DensityMatrix};
use serde::Deserialize;

/// One input object; tuples nest.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSpec {
    State(DensityMatrix),
    Channel(ChoiChannel),
    /// Fock-truncated CV state generator.
    Cv { state: CvState, cutoff: usize },
    Depolarizing { dim: usize, eta: f64 },
    Identity { dim: usize },
    Tuple(Vec<ObjectSpec>),
}

impl ObjectSpec {
    pub fn components(&self) -> Result<Vec<ChoiChannel>> {
        Ok(match self {
            ObjectSpec::State(rho) => vec![ChoiChannel::from_state(rho)],
            ObjectSpec::Channel(ch) => vec![ch.clone()],
            ObjectSpec::Cv { state, cutoff } => vec![ChoiChannel::from_state(&truncated_cv_state(*state, *cutoff)?)],
            ObjectSpec::Depolarizing { dim, eta } => vec![depolarizing(*dim, *eta)?],
            ObjectSpec::Identity { dim } => vec![identity_channel(*dim)],
            ObjectSpec::Tuple(items) => {
                let mut out = Vec::new();
                for it in items {
                    out.extend(it.components()?);
                }
                out
            }
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Parses JSON with the file name and line/column in the error.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| anyhow::anyhow!("{origin}: line {} column {}: {e}", e.line(), e.column()))
}

/// Components of all input files, in order.
pub fn load_objects(paths: &[impl AsRef<Path>]) -> Result<Vec<ChoiChannel>> {
    if paths.is_empty() {
        bail!("no input object given");
    }
    let mut out = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let spec: ObjectSpec = parse_json(&read(p)?, &p.display().to_string())?;
        out.extend(spec.components().with_context(|| format!("invalid object in {}", p.display()))?);
    }
    Ok(out)
}

/// Inline JSON (starting with `{`) or a path to a JSON file.
pub fn inline_or_file<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        parse_json(trimmed, &format!("{what} (inline)"))
    } else {
        let p = Path::new(arg);
        parse_json(&read(p)?, &p.display().to_string())
    }
}

pub fn load_free_set(arg: &str) -> Result<FreeSetSpec> {
    let f: FreeSetSpec = inline_or_file(arg, "free set")?;
    f.validate().context("invalid free set")?;
    Ok(f)
}

/// `a..b` (inclusive) or a comma separated list.
pub fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let levels: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().with_context(|| format!("bad level range start in {s:?}"))?;
        let b: usize = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad level range end in {s:?}"))?;
        if a > b {
            bail!("empty level range {s:?}");
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad level {t:?}")))
            .collect::<Result<_>>()?
    };
    if levels.is_empty() {
        bail!("no levels given");
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_parse() {
        assert_eq!(parse_levels("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_levels("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_levels("2, 4,8").unwrap(), vec![2, 4, 8]);
        assert!(parse_levels("5..2").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn object_specs() {
        let t: ObjectSpec = serde_json::from_str(r#"{"tuple":[{"identity":{"dim":2}},{"depolarizing":{"dim":2,"eta":0.5}}]}"#).unwrap();
        assert_eq!(t.components().unwrap().len(), 2);
        let cv: ObjectSpec =
            serde_json::from_str(r#"{"cv":{"state":{"kind":"two_mode_squeezed","lambda":0.5},"cutoff":3}}"#).unwrap();
        assert_eq!(cv.components().unwrap()[0].dim_out(), 9);
        assert!(serde_json::from_str::<ObjectSpec>(r#"{"identity":{"dim":2,"extra":1}}"#).is_err());
    }
}
