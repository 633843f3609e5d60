//! Command-line overrides, applied as dotted keys on top of the config file.

use anyhow::{anyhow, bail, Context, Result};
use toml::{Table, Value};

use crate::config::ExperimentConfig;

/// Loose scalar parsing for `--set key=value`: integers, floats and booleans
/// keep their type, anything else stays a string.
pub fn parse_value(s: &str) -> Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        Value::Float(f)
    } else if let Ok(b) = s.parse::<bool>() {
        Value::Boolean(b)
    } else if let Ok(v) = format!("v = {s}").parse::<Table>() {
        v["v"].clone()
    } else {
        Value::String(s.to_owned())
    }
}

pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty key in `{path}`"))?;
    let mut t = table;
    for k in keys {
        let entry = t.entry(k.to_owned()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| anyhow!("`{k}` in `{path}` is not a section"))?;
    }
    t.insert(last.to_owned(), value);
    Ok(())
}

fn kind(name: &str) -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), Value::String(name.into()));
    t
}

/// Innovation laws written `gaussian`, `gaussian:2`, `student-t:5`,
/// `sym-pareto:3`, `uniform:1` or `rademacher`.
pub fn innovation(s: &str) -> Result<Value> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a.parse::<f64>().with_context(|| format!("bad parameter in `{s}`"))?)),
        None => (s, None),
    };
    let name = name.replace('-', "_");
    let param = match name.as_str() {
        "gaussian" => Some("sd"),
        "student_t" => Some("nu"),
        "sym_pareto" => Some("r"),
        "uniform" => Some("half_width"),
        "rademacher" => None,
        _ => bail!("unknown innovation `{s}`"),
    };
    let mut t = kind(&name);
    match (param, arg) {
        (Some(p), Some(v)) => {
            t.insert(p.into(), Value::Float(v));
        }
        (Some(p), None) if p == "nu" || p == "r" => bail!("innovation `{s}` needs a parameter, as in `{name}:5`"),
        (None, Some(_)) => bail!("innovation `{name}` takes no parameter"),
        _ => {}
    }
    Ok(Value::Table(t))
}

/// Rotation numbers written `golden`, `sqrt2`, `cubic`, `p/q` or a decimal.
pub fn frequency(s: &str) -> Result<Value> {
    let t = match s {
        "golden" | "sqrt2" | "cubic" => kind(s),
        _ => {
            if let Some((p, q)) = s.split_once('/') {
                let mut t = kind("rational");
                t.insert("p".into(), Value::Integer(p.trim().parse().with_context(|| format!("bad numerator in `{s}`"))?));
                t.insert("q".into(), Value::Integer(q.trim().parse().with_context(|| format!("bad denominator in `{s}`"))?));
                t
            } else {
                let mut t = kind("value");
                t.insert("a".into(), Value::Float(s.parse().with_context(|| format!("unknown frequency `{s}`"))?));
                t
            }
        }
    };
    Ok(Value::Table(t))
}

/// Process section for `--family`; `rademacher` and `gaussian` stand for
/// i.i.d. draws of that law.
pub fn family(name: &str) -> Result<Table> {
    let mut t = Table::new();
    match name {
        "dmr" | "circle" | "arl" | "pm" | "linear" | "iid" => {
            t.insert("family".into(), Value::String(name.into()));
        }
        "rademacher" | "gaussian" => {
            t.insert("family".into(), Value::String("iid".into()));
            t.insert("law".into(), innovation(name)?);
        }
        _ => bail!("unknown family `{name}`"),
    }
    Ok(t)
}

/// Builds the effective configuration. `file` is the parsed config file if
/// any; `family` replaces the process section unless it names the family
/// already there; `sets` are applied in order.
pub fn build(file: Option<Table>, command: &str, family_name: Option<&str>, sets: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut root = file.unwrap_or_default();
    root.insert("command".into(), Value::String(command.into()));
    if let Some(name) = family_name {
        let fresh = family(name)?;
        let same = root.get("process").and_then(|p| p.get("family")) == fresh.get("family") && fresh.get("law").is_none();
        if !same {
            root.insert("process".into(), Value::Table(fresh));
        }
    }
    for (k, v) in sets {
        set_path(&mut root, k, v.clone())?;
    }
    let text = toml::to_string(&root)?;
    ExperimentConfig::from_toml(&text)
}

/// Family named by the merged tables, for routing ambiguous flags.
pub fn effective_family(file: Option<&Table>, family_name: Option<&str>) -> Option<String> {
    match family_name {
        Some(n) => family(n).ok().and_then(|t| t.get("family").and_then(Value::as_str).map(str::to_owned)),
        None => file?.get("process")?.get("family")?.as_str().map(str::to_owned),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CommandKind;
    use siplab::processes::{Innovation, ProcessSpec};

    #[test]
    fn values_and_paths() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("[1, 2]"), Value::Array(vec![Value::Integer(1), Value::Integer(2)]));
        assert_eq!(parse_value("skorokhod-exit"), Value::String("skorokhod-exit".into()));
        let mut t = Table::new();
        set_path(&mut t, "process.a", Value::Float(1.0)).unwrap();
        assert_eq!(t["process"]["a"], Value::Float(1.0));
        assert!(set_path(&mut t, "process.a.b", Value::Float(1.0)).is_err());
    }

    #[test]
    fn aliases_and_laws() {
        let cfg = build(None, "couple", Some("rademacher"), &[]).unwrap();
        assert_eq!(cfg.process, Some(ProcessSpec::Iid { law: Innovation::Rademacher }));
        let sets = vec![
            ("process.c".into(), Value::Float(0.5)),
            ("process.delta".into(), Value::Float(0.5)),
            ("process.s".into(), Value::Float(4.0)),
            ("process.innovation".into(), innovation("student-t:5").unwrap()),
        ];
        let cfg = build(None, "coeffs", Some("arl"), &sets).unwrap();
        assert_eq!(cfg.command, CommandKind::Coeffs);
        match cfg.process.unwrap() {
            ProcessSpec::Arl { innovation, .. } => assert_eq!(innovation, Innovation::StudentT { nu: 5.0 }),
            p => panic!("{p:?}"),
        }
        assert!(innovation("student-t").is_err());
        assert!(family("nope").is_err());
        assert_eq!(frequency("2/5").unwrap()["q"], Value::Integer(5));
    }

    #[test]
    fn flags_override_file() {
        let file: Table = "command = \"simulate\"\nreplicas = 4\n[process]\nfamily = \"dmr\"\na = 2.0\n".parse().unwrap();
        let cfg = build(Some(file.clone()), "simulate", Some("dmr"), &[("replicas".into(), Value::Integer(9))]).unwrap();
        assert_eq!(cfg.replicas, 9);
        assert_eq!(cfg.process, Some(ProcessSpec::Dmr { a: 2.0, f_exponent: 0.5 }));
        assert_eq!(effective_family(Some(&file), None).as_deref(), Some("dmr"));
        let err = build(Some(file), "simulate", Some("pm"), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("gamma"));
    }
}
