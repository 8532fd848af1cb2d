//! Declarative abstraction specifications, read from TOML.
//!
//! ```toml
//! mode = "may"                      # optional: may | must
//!
//! [[mapping]]                       # pure removal: no target
//! agent = "Voter1"
//! sources = ["mem_sg", "mem_vt"]
//!
//! [[mapping]]                       # merge through a function
//! agent = "Voter1"
//! sources = ["x"]
//! target = { name = "z", lo = 0, hi = 1 }
//! fn = { kind = "parity" }          # constant | identity | parity | buckets | table
//! scope = ["has", "voted"]          # optional: restrict to these locations
//! outside_default = 0               # optional
//! reset = [0]                       # optional: in-scope source values
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::abstraction::{AbstractionMode, Mapping, MappingFn, ScopedMapping};
use crate::ast::{IntRange, MasGraph, Value, VarDecl, VarDomain, VarSet};
use crate::error::{MasgError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mode: Option<String>,
    #[serde(default)]
    mapping: Vec<MappingEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingEntry {
    agent: String,
    sources: Vec<String>,
    target: Option<TargetEntry>,
    #[serde(rename = "fn")]
    function: Option<FnEntry>,
    scope: Option<Vec<String>>,
    outside_default: Option<Value>,
    reset: Option<Vec<Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetEntry {
    name: String,
    lo: Value,
    hi: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FnEntry {
    kind: String,
    value: Option<Value>,
    bounds: Option<Vec<Value>>,
    rows: Option<Vec<Vec<Value>>>,
}

/// The parsed content of an abstraction config.
#[derive(Debug)]
pub struct AbstractionConfig {
    pub mode: Option<AbstractionMode>,
    pub maps: Vec<ScopedMapping>,
}

fn compile_fn(
    entry: &FnEntry,
    sources: &VarSet,
    target: &VarDecl,
    mas: &MasGraph,
) -> Result<MappingFn> {
    let table = &mas.vtable;
    match entry.kind.as_str() {
        "constant" => {
            let v = entry
                .value
                .ok_or_else(|| MasgError::Config("constant mapping needs `value`".into()))?;
            MappingFn::from_fn(sources, target, table, |_| v)
        }
        "identity" => {
            if sources.slots().len() != 1 {
                return Err(MasgError::Config(
                    "identity mapping needs exactly one scalar source".into(),
                ));
            }
            MappingFn::from_fn(sources, target, table, |vec| vec[0])
        }
        "parity" => {
            if sources.slots().len() != 1 {
                return Err(MasgError::Config(
                    "parity mapping needs exactly one scalar source".into(),
                ));
            }
            MappingFn::from_fn(sources, target, table, |vec| (vec[0].rem_euclid(2)))
        }
        "buckets" => {
            let bounds = entry
                .bounds
                .as_ref()
                .ok_or_else(|| MasgError::Config("bucket mapping needs `bounds`".into()))?;
            if sources.slots().len() != 1 {
                return Err(MasgError::Config(
                    "bucket mapping needs exactly one scalar source".into(),
                ));
            }
            if bounds.windows(2).any(|w| w[0] > w[1]) {
                return Err(MasgError::Config("bucket bounds must be ascending".into()));
            }
            let bounds = bounds.clone();
            MappingFn::from_fn(sources, target, table, move |vec| {
                bounds.iter().filter(|b| **b <= vec[0]).count() as Value
            })
        }
        "table" => {
            let rows = entry
                .rows
                .as_ref()
                .ok_or_else(|| MasgError::Config("table mapping needs `rows`".into()))?;
            let width = sources.slots().len();
            let mut map = BTreeMap::new();
            for row in rows {
                if row.len() != width + 1 {
                    return Err(MasgError::Config(format!(
                        "table row {row:?} should hold {width} source value(s) and one result"
                    )));
                }
                let key: Box<[Value]> = row[..width].into();
                let val = row[width];
                if map.insert(key, val).is_some() {
                    return Err(MasgError::Config(format!("duplicate table row {row:?}")));
                }
            }
            MappingFn::from_table(map, sources, target, table)
        }
        other => Err(MasgError::Config(format!("unknown mapping kind `{other}`"))),
    }
}

/// Parses an abstraction config against a system.
pub fn parse_abstraction_config(text: &str, mas: &MasGraph) -> Result<AbstractionConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| MasgError::Config(e.to_string()))?;
    let mode = match file.mode.as_deref() {
        None => None,
        Some("may") => Some(AbstractionMode::May),
        Some("must") => Some(AbstractionMode::Must),
        Some(other) => {
            return Err(MasgError::Config(format!(
                "mode must be `may` or `must`, not `{other}`"
            )))
        }
    };
    let mut maps = Vec::new();
    for entry in &file.mapping {
        let owner = mas
            .agent_index(&entry.agent)
            .ok_or_else(|| MasgError::Config(format!("unknown agent `{}`", entry.agent)))?;
        let mut ids = Vec::new();
        for s in &entry.sources {
            let q = format!("{}.{}", entry.agent, s);
            let id = mas
                .vtable
                .lookup(&q)
                .ok_or_else(|| MasgError::Config(format!("unknown source variable `{q}`")))?;
            ids.push(id);
        }
        let sources = VarSet::from_iter(ids, &mas.vtable);
        let target = match (&entry.target, &entry.function) {
            (None, None) => None,
            (Some(t), Some(f)) => {
                let decl = VarDecl {
                    name: t.name.clone(),
                    domain: VarDomain::Scalar(IntRange::new(t.lo, t.hi)),
                    default: vec![t.lo],
                    shared: false,
                };
                let function = compile_fn(f, &sources, &decl, mas)?;
                Some((decl, function))
            }
            _ => {
                return Err(MasgError::Config(
                    "`target` and `fn` must be given together (or both omitted for removal)"
                        .into(),
                ))
            }
        };
        let scope: BTreeSet<crate::ast::LocId> = match &entry.scope {
            None => (0..mas.agents[owner].locations.len() as u32)
                .map(crate::ast::LocId)
                .collect(),
            Some(names) => {
                let mut set = BTreeSet::new();
                for n in names {
                    let id = mas.agents[owner].loc_id(n).ok_or_else(|| {
                        MasgError::Config(format!(
                            "agent `{}` has no location `{n}`",
                            entry.agent
                        ))
                    })?;
                    set.insert(id);
                }
                set
            }
        };
        if target.is_none() && entry.outside_default.is_some() {
            return Err(MasgError::Config(
                "`outside_default` needs a target variable".into(),
            ));
        }
        maps.push(ScopedMapping {
            mapping: Mapping {
                owner,
                sources,
                target,
            },
            scope,
            outside_default: entry.outside_default,
            reset: entry.reset.as_ref().map(|r| r.clone().into_boxed_slice()),
        });
    }
    Ok(AbstractionConfig { mode, maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_mas;

    fn sys() -> MasGraph {
        parse_mas(
            "agent V { var x: 0..3 = 0; var m: 0..1 = 0; loc idle, has, voted; init idle;
               edge idle -> has do x := i select i: 1..3
               edge has -> voted do m := 1 }",
            "<t>",
        )
        .unwrap()
    }

    #[test]
    fn removal_and_merge_entries_parse() {
        let mas = sys();
        let cfg = parse_abstraction_config(
            r#"
            mode = "may"
            [[mapping]]
            agent = "V"
            sources = ["m"]

            [[mapping]]
            agent = "V"
            sources = ["x"]
            target = { name = "z", lo = 0, hi = 1 }
            fn = { kind = "parity" }
            scope = ["has", "voted"]
            "#,
            &mas,
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(AbstractionMode::May));
        assert_eq!(cfg.maps.len(), 2);
        assert!(cfg.maps[0].mapping.target.is_none());
        let (decl, f) = cfg.maps[1].mapping.target.as_ref().unwrap();
        assert_eq!(decl.name, "z");
        assert_eq!(f.apply(&[3]), 1);
        assert_eq!(cfg.maps[1].scope.len(), 2);
    }

    #[test]
    fn table_fn_must_be_total() {
        let mas = sys();
        let err = parse_abstraction_config(
            r#"
            [[mapping]]
            agent = "V"
            sources = ["x"]
            target = { name = "z", lo = 0, hi = 1 }
            fn = { kind = "table", rows = [[0, 0], [1, 1]] }
            "#,
            &mas,
        )
        .unwrap_err();
        assert!(matches!(err, MasgError::Abstraction(_)), "{err:?}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let mas = sys();
        assert!(parse_abstraction_config("[[mapping]]\nagent = \"V\"\nsources = [\"m\"]\nbogus = 1\n", &mas).is_err());
    }
}
