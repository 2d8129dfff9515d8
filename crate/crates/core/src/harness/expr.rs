//! Closed-form coefficient and source expressions from the config file.
//!
//! Expressions use the evalexpr syntax. Coordinates are bound to `x0`,
//! `x1`, ... by axis; when the last axis is time it is also bound to `t`.
//! Builtins such as `math::exp` and `math::sin` are available and `^` is
//! the power operator. Integer literals divide as integers, so write `0.5`
//! rather than `1/2`.

use std::sync::Arc;

use evalexpr::{build_operator_tree, Context, EvalexprError, EvalexprResult, Node, Value};

use crate::error::{Error, Result};
use crate::operator::lower::SourceFn;

#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    tree: Arc<Node>,
    dim: usize,
    time: bool,
}

struct PointContext<'a> {
    names: &'a [&'static str],
    values: Vec<Value>,
}

const AXIS_NAMES: [&str; 8] = ["x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7"];

impl Context for PointContext<'_> {
    fn get_value(&self, identifier: &str) -> Option<&Value> {
        self.names
            .iter()
            .position(|n| *n == identifier)
            .map(|i| &self.values[i])
    }

    fn call_function(&self, identifier: &str, _argument: &Value) -> EvalexprResult<Value> {
        Err(EvalexprError::FunctionIdentifierNotFound(
            identifier.to_string(),
        ))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, disabled: bool) -> EvalexprResult<()> {
        if disabled {
            Err(EvalexprError::CustomMessage(
                "builtins are always on".into(),
            ))
        } else {
            Ok(())
        }
    }
}

impl Expression {
    /// Parses `source` and checks it evaluates to a number at the origin.
    /// `path` names the config field for error messages.
    pub fn parse(path: &str, source: &str, dim: usize, time: bool) -> Result<Self> {
        if dim > AXIS_NAMES.len() {
            return Err(Error::schema(
                path,
                format!("expressions support at most {} axes", AXIS_NAMES.len()),
            ));
        }
        let tree = build_operator_tree(source)
            .map_err(|e| Error::schema(path, format!("`{source}`: {e}")))?;
        let expr = Self {
            source: source.to_string(),
            tree: Arc::new(tree),
            dim,
            time,
        };
        expr.try_eval(&vec![0.0; dim])
            .map_err(|e| Error::schema(path, format!("`{source}`: {e}")))?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, p: &[f64]) -> EvalexprResult<f64> {
        let mut names: Vec<&'static str> = AXIS_NAMES[..self.dim].to_vec();
        let mut values: Vec<Value> = p.iter().map(|&v| Value::Float(v)).collect();
        if self.time {
            names.push("t");
            values.push(Value::Float(p[self.dim - 1]));
        }
        let ctx = PointContext {
            names: &names,
            values,
        };
        self.tree.eval_number_with_context(&ctx)
    }

    /// NaN on evaluation failure; callers treat non-finite values as errors.
    pub fn eval(&self, p: &[f64]) -> f64 {
        self.try_eval(p).unwrap_or(f64::NAN)
    }

    pub fn to_fn(&self) -> SourceFn {
        let e = self.clone();
        Arc::new(move |p: &[f64]| e.eval(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_coordinates_and_builtins() {
        let e = Expression::parse("s", "math::exp(x0) * math::cos(x1) + t^2", 2, true).unwrap();
        let p = [0.3, 0.7];
        let want = 0.3f64.exp() * 0.7f64.cos() + 0.49;
        assert!((e.eval(&p) - want).abs() < 1e-14);
        let f = e.to_fn();
        assert_eq!(f(&p), e.eval(&p));
    }

    #[test]
    fn errors_carry_the_field_path() {
        let err = Expression::parse("operator.source", "x0 +* 2", 1, false).unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref path, .. } if path == "operator.source"),
            "{err}"
        );
        let err = Expression::parse("operator.source", "x5", 2, false).unwrap_err();
        assert!(err.to_string().contains("operator.source"));
    }

    #[test]
    fn time_alias_absent_without_time_axis() {
        assert!(Expression::parse("s", "t", 2, false).is_err());
        assert!(Expression::parse("s", "t + x1", 2, true).is_ok());
    }
}
