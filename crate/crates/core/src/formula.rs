//! Formula strings of the form `y ~ a + b`, `~ a` or `~ 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub response: Option<String>,
    /// Covariate or factor names; the intercept is implicit.
    pub terms: Vec<String>,
}

fn fail(formula: &str, message: impl Into<String>) -> Error {
    Error::Formula { formula: formula.to_string(), message: message.into() }
}

fn check_name(formula: &str, name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(fail(formula, "empty term"));
    }
    if name.chars().any(|c| matches!(c, '~' | '+' | '*' | ':' | '(' | ')' | '^' | '-')) {
        return Err(fail(formula, format!("unsupported term {name:?}; only main effects are allowed")));
    }
    Ok(())
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s.split_once('~').ok_or_else(|| fail(s, "missing '~'"))?;
        let lhs = lhs.trim();
        let response = if lhs.is_empty() {
            None
        } else {
            check_name(s, lhs)?;
            Some(lhs.to_string())
        };
        let mut terms: Vec<String> = Vec::new();
        for raw in rhs.split('+') {
            let term = raw.trim();
            if term == "1" {
                continue;
            }
            if term == "0" {
                return Err(fail(s, "models without an intercept are not supported"));
            }
            check_name(s, term)?;
            if terms.iter().any(|t| t == term) {
                return Err(fail(s, format!("term {term:?} repeated")));
            }
            terms.push(term.to_string());
        }
        Ok(Self { response, terms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Formula> {
        s.parse()
    }

    #[test]
    fn accepted_forms() {
        assert_eq!(parse("~ 1").unwrap(), Formula { response: None, terms: vec![] });
        assert_eq!(
            parse("y ~ state + age").unwrap(),
            Formula { response: Some("y".into()), terms: vec!["state".into(), "age".into()] }
        );
        assert_eq!(parse("y~1+x").unwrap().terms, vec!["x".to_string()]);
    }

    #[test]
    fn rejected_forms() {
        for bad in ["y", "y ~", "y ~ a +", "~ a:b", "~ a*b", "~ 0 + a", "~ a + a", "a ~ b ~ c"] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }
}
