use std::fmt::Write;

use super::ast::{Expr, Operand, SmellScript};

/// Canonical text for a script. Severity is always written out, and
/// parentheses are added wherever re-parsing would otherwise flatten or
/// regroup the tree.
pub fn pretty_print(script: &SmellScript) -> String {
    let mut out = String::new();
    for (i, def) in script.definitions().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "smell {} {{", def.name);
        let _ = writeln!(out, "    severity {}", def.severity);
        let _ = writeln!(out, "    when {}", expr_to_string(&def.condition));
        out.push_str("}\n");
    }
    out
}

pub fn expr_to_string(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

fn write_expr(out: &mut String, expr: &Expr) {
    match expr {
        Expr::Or(children) => write_joined(out, children, " or ", |c| matches!(c, Expr::Or(_))),
        Expr::And(children) => {
            write_joined(out, children, " and ", |c| matches!(c, Expr::And(_) | Expr::Or(_)))
        }
        Expr::Not(inner) => {
            out.push_str("not ");
            write_child(out, inner, matches!(**inner, Expr::And(_) | Expr::Or(_)));
        }
        Expr::Compare { lhs, op, rhs } => {
            write_operand(out, lhs);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_operand(out, rhs);
        }
    }
}

fn write_joined(out: &mut String, children: &[Expr], sep: &str, needs_parens: impl Fn(&Expr) -> bool) {
    for (i, child) in children.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        write_child(out, child, needs_parens(child));
    }
}

fn write_child(out: &mut String, child: &Expr, parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, child);
        out.push(')');
    } else {
        write_expr(out, child);
    }
}

pub(crate) fn write_operand(out: &mut String, operand: &Operand) {
    match operand {
        Operand::MetricRef(name) => out.push_str(name),
        Operand::ThresholdRef(name) => {
            out.push('$');
            out.push_str(name);
        }
        // f64's Display never uses exponent notation and round-trips exactly.
        Operand::Literal(value) => {
            let _ = write!(out, "{value}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::{CmpOp, Severity, SmellDefinition};
    use crate::dsl::parser::parse_script;

    fn cmp(m: &str, v: f64) -> Expr {
        Expr::compare(Operand::MetricRef(m.into()), CmpOp::Gt, Operand::Literal(v))
    }

    fn script(condition: Expr) -> SmellScript {
        SmellScript::new(vec![SmellDefinition { name: "A".into(), severity: Severity::Medium, condition }]).unwrap()
    }

    #[test]
    fn god_class_round_trips() {
        let src = "smell GodClass { severity high when wmc >= $WMC_VERY_HIGH and atfd > $FEW and tcc < $ONE_THIRD }";
        let parsed = parse_script(src).unwrap();
        let text = pretty_print(&parsed);
        assert!(text.contains("smell GodClass"));
        assert_eq!(parse_script(&text).unwrap(), parsed);
    }

    #[test]
    fn default_severity_is_materialized() {
        let text = pretty_print(&parse_script("smell A { when x > 1 }").unwrap());
        assert!(text.contains("severity medium"), "{text}");
    }

    #[test]
    fn nested_not_or_keeps_structure() {
        let tree = Expr::not(Expr::Or(vec![cmp("a", 1.0), Expr::And(vec![cmp("b", 2.0), cmp("c", 0.5)])]));
        let s = script(tree);
        let text = pretty_print(&s);
        assert!(text.contains("not (a > 1 or b > 2 and c > 0.5)"), "{text}");
        assert_eq!(parse_script(&text).unwrap(), s);
    }

    #[test]
    fn same_operator_nesting_is_parenthesized() {
        let tree = Expr::And(vec![Expr::And(vec![cmp("a", 1.0), cmp("b", 2.0)]), cmp("c", 3.0)]);
        let s = script(tree);
        assert_eq!(parse_script(&pretty_print(&s)).unwrap(), s);
        let tree = Expr::Or(vec![cmp("a", 1.0), Expr::Or(vec![cmp("b", 2.0), cmp("c", 3.0)])]);
        let s = script(tree);
        assert_eq!(parse_script(&pretty_print(&s)).unwrap(), s);
    }

    #[test]
    fn literals_keep_their_value() {
        for v in [0.33, -1.0, 47.0, 1e20, 0.1 + 0.2, -0.000123] {
            let s = script(cmp("x", v));
            assert_eq!(parse_script(&pretty_print(&s)).unwrap(), s, "{v}");
        }
    }
}
