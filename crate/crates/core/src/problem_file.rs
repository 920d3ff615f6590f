//! JSON form of a finite problem.
//!
//! ```json
//! {
//!   "outcomes": [0, 10, 20],
//!   "pmfs": [{"id": "P0", "p": ["37/40", "1/20", "1/40"]}],
//!   "losses": [{"id": "b1", "actions": [0, 9, 19, 21], "loss0": [0, 9, 19, 21]}],
//!   "evariable": {"values": [0, 10, 20]},
//!   "rule": {"b1": [0, 9, 19]},
//!   "ell": 1
//! }
//! ```
//!
//! Scalars are JSON numbers or strings holding `"num/den"` or a decimal.
//! `evariable`, `rule` and `ell` are optional; rule entries name actions.

use num_traits::One;
use serde_json::{json, Map, Value};

use crate::error::{GnpError, Result};
use crate::evariables::{EValueTable, ExactEValue};
use crate::gnp::{fmt_rat, parse_rational, DecisionRule, GnpProblem, NullModel, Pmf, Rational, RiskBudget, TypeOneLoss};
use crate::verify::rule_to_json;

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: GnpProblem,
    pub evariable: Option<EValueTable>,
    pub rule: Option<DecisionRule>,
    pub budget: RiskBudget,
}

fn err(path: &str, msg: impl std::fmt::Display) -> GnpError {
    GnpError::ProblemFile(format!("at `{path}`: {msg}"))
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| err(path, format!("missing field `{key}`")))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| err(path, "expected an array"))
}

fn string(v: &Value, path: &str) -> Result<String> {
    v.as_str().map(str::to_owned).ok_or_else(|| err(path, "expected a string"))
}

fn scalar(v: &Value, path: &str) -> Result<Rational> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(err(path, "expected a number or a \"num/den\" string")),
    };
    parse_rational(&text).ok_or_else(|| err(path, format!("`{text}` is not a rational number")))
}

fn scalars(v: &Value, path: &str) -> Result<Vec<Rational>> {
    array(v, path)?.iter().enumerate().map(|(i, x)| scalar(x, &format!("{path}[{i}]"))).collect()
}

fn evalue(v: &Value, path: &str) -> Result<ExactEValue> {
    if let Some(s) = v.as_str() {
        if matches!(s.trim(), "inf" | "Infinity" | "+inf") {
            return Ok(ExactEValue::Infinite);
        }
    }
    scalar(v, path).map(ExactEValue::Finite)
}

pub fn parse(text: &str) -> Result<ProblemFile> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| GnpError::ProblemFile(e.to_string()))?;
    let top = object(&root, "$")?;

    let outcomes = scalars(field(top, "$", "outcomes")?, "outcomes")?;
    let mut pmfs = Vec::new();
    for (i, p) in array(field(top, "$", "pmfs")?, "pmfs")?.iter().enumerate() {
        let path = format!("pmfs[{i}]");
        let obj = object(p, &path)?;
        let id = string(field(obj, &path, "id")?, &format!("{path}.id"))?;
        let mass = scalars(field(obj, &path, "p")?, &format!("{path}.p"))?;
        pmfs.push(Pmf { id, p: mass });
    }
    let null = NullModel::finite(outcomes, pmfs).map_err(|e| err("pmfs", e))?;

    let mut losses = Vec::new();
    for (i, l) in array(field(top, "$", "losses")?, "losses")?.iter().enumerate() {
        let path = format!("losses[{i}]");
        let obj = object(l, &path)?;
        let id = string(field(obj, &path, "id")?, &format!("{path}.id"))?;
        let actions = scalars(field(obj, &path, "actions")?, &format!("{path}.actions"))?;
        let loss0 = scalars(field(obj, &path, "loss0")?, &format!("{path}.loss0"))?;
        losses.push(TypeOneLoss::finite(id, actions, loss0).map_err(|e| err(&path, e))?);
    }
    let problem = GnpProblem::new(losses, null).map_err(|e| err("losses", e))?;
    let n = problem.num_outcomes()?;

    let evariable = match top.get("evariable") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let obj = object(v, "evariable")?;
            let values = array(field(obj, "evariable", "values")?, "evariable.values")?;
            if values.len() != n {
                return Err(err("evariable.values", format!("{} values for {n} outcomes", values.len())));
            }
            let parsed = values.iter().enumerate().map(|(i, x)| evalue(x, &format!("evariable.values[{i}]"))).collect::<Result<_>>()?;
            Some(EValueTable::new(parsed).map_err(|e| err("evariable", e))?)
        }
    };

    let rule = match top.get("rule") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let obj = object(v, "rule")?;
            let mut table = Vec::new();
            for loss in problem.losses() {
                let id = &loss.id().0;
                let path = format!("rule.{id}");
                let row = scalars(field(obj, "rule", id)?, &path)?;
                if row.len() != n {
                    return Err(err(&path, format!("{} entries for {n} outcomes", row.len())));
                }
                let (actions, _) = loss.expect_table()?;
                let idx = row
                    .iter()
                    .enumerate()
                    .map(|(y, a)| {
                        actions.iter().position(|x| x == a).ok_or_else(|| err(&format!("{path}[{y}]"), format!("{} is not an action of `{id}`", fmt_rat(a))))
                    })
                    .collect::<Result<Vec<_>>>()?;
                table.push(idx);
            }
            if let Some(extra) = obj.keys().find(|k| problem.loss_index(&crate::gnp::LossId::new(k.as_str())).is_err()) {
                return Err(err("rule", format!("unknown loss id `{extra}`")));
            }
            Some(DecisionRule::new(&problem, table)?)
        }
    };

    let budget = match top.get("ell") {
        None | Some(Value::Null) => RiskBudget::default(),
        Some(v) => RiskBudget::new(scalar(v, "ell")?).map_err(|e| err("ell", e))?,
    };
    Ok(ProblemFile { problem, evariable, rule, budget })
}

pub fn to_json(file: &ProblemFile) -> Result<Value> {
    let p = &file.problem;
    let strs = |v: &[Rational]| Value::Array(v.iter().map(|r| Value::String(fmt_rat(r))).collect());
    let pmfs: Vec<Value> = p.pmfs()?.iter().map(|m| json!({"id": m.id, "p": strs(&m.p)})).collect();
    let losses = p
        .losses()
        .iter()
        .map(|l| {
            let (a, v) = l.expect_table()?;
            Ok(json!({"id": l.id().0, "actions": strs(a), "loss0": strs(v)}))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut top = Map::new();
    top.insert("outcomes".into(), strs(p.outcomes()?));
    top.insert("pmfs".into(), Value::Array(pmfs));
    top.insert("losses".into(), Value::Array(losses));
    if let Some(s) = &file.evariable {
        let values = s
            .values()
            .iter()
            .map(|v| match v {
                ExactEValue::Finite(x) => Ok(Value::String(fmt_rat(x))),
                ExactEValue::Infinite => Ok(Value::String("inf".into())),
                ExactEValue::Calibrated(_) => Err(GnpError::ProblemFile("calibrated e-values have no exact rational form".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        top.insert("evariable".into(), json!({ "values": values }));
    }
    if let Some(r) = &file.rule {
        top.insert("rule".into(), rule_to_json(p, r));
    }
    if !file.budget.ell().is_one() {
        top.insert("ell".into(), Value::String(fmt_rat(file.budget.ell())));
    }
    Ok(Value::Object(top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnp::{int, rat};

    const EXAMPLE: &str = r#"{
        "outcomes": [0, 10, 20],
        "pmfs": [{"id": "P0", "p": ["37/40", "1/20", 0.025]}],
        "losses": [{"id": "b1", "actions": [0, 9, 19, 21], "loss0": [0, 9, 19, 21]}],
        "evariable": {"values": [0, 10, 20]},
        "rule": {"b1": [0, 9, 19]}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let f = parse(EXAMPLE).unwrap();
        assert_eq!(f.problem.pmfs().unwrap()[0].p[2], rat(1, 40));
        assert_eq!(f.rule.as_ref().unwrap().table(), &[vec![0, 1, 2]]);
        assert_eq!(f.evariable.as_ref().unwrap().exact_values().unwrap(), vec![int(0), int(10), int(20)]);
        let back = parse(&to_json(&f).unwrap().to_string()).unwrap();
        assert_eq!(back.rule, f.rule);
        assert_eq!(back.problem.pmfs().unwrap(), f.problem.pmfs().unwrap());
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse("{\n \"outcomes\": [0,\n}").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn field_errors_carry_a_path() {
        let bad = EXAMPLE.replace("\"1/20\"", "\"x\"");
        assert!(parse(&bad).unwrap_err().to_string().contains("pmfs[0].p[1]"));
        let bad = EXAMPLE.replace("[0, 9, 19]", "[0, 8, 19]");
        assert!(parse(&bad).unwrap_err().to_string().contains("rule.b1[1]"));
        let bad = EXAMPLE.replace("\"losses\"", "\"loses\"");
        assert!(parse(&bad).unwrap_err().to_string().contains("missing field `losses`"));
        let bad = EXAMPLE.replace("\"37/40\"", "\"36/40\"");
        assert!(parse(&bad).unwrap_err().to_string().contains("at `pmfs`"));
    }
}
