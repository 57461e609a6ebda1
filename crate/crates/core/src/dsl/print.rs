use std::fmt::Write;

use super::{Condition, EditTemplate, Expr, Number, Selector, Statement};

fn number(n: &Number) -> String {
    // `{}` on f64 is the shortest string that parses back to the same value.
    if n.body_height {
        format!("{} * body_height", n.value)
    } else {
        format!("{}", n.value)
    }
}

fn selector(s: &Selector) -> String {
    s.conditions
        .iter()
        .map(|c| match c {
            Condition::Category(v) => format!("category={v}"),
            Condition::Tag(v) => format!("tag={v}"),
            Condition::Gender(v) => format!("gender={v}"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn print_statement(s: &Statement) -> String {
    match s {
        Statement::Offset { pattern, dx, dy } => {
            format!("offset points({pattern}) by ({}, {});", number(dx), number(dy))
        }
        Statement::SetAxis { point, axis, expr } => {
            let rhs = match expr {
                Expr::Literal { value } => number(value),
                Expr::Other {
                    point,
                    axis,
                    offset,
                } => {
                    let mut r = format!("other.point({point}).{}", axis.as_str());
                    if let Some(o) = offset {
                        write!(r, " + {}", number(o)).unwrap();
                    }
                    r
                }
            };
            format!("set point({point}).{} = {rhs};", axis.as_str())
        }
        Statement::Align {
            pattern,
            point,
            axis,
        } => format!(
            "align points({pattern}) with other.point({point}).{};",
            axis.as_str()
        ),
        Statement::Disable { pattern } => format!("disable points({pattern});"),
        Statement::Enable { pattern } => format!("enable points({pattern});"),
        Statement::SetStyle { entry, value } => format!("set style {entry} = {value};"),
        Statement::ClampWithin { pattern } => format!("clamp points({pattern}) within other;"),
    }
}

/// Canonical text: one statement per line, four-space indent, `require` first,
/// comments dropped.
pub fn print_template(t: &EditTemplate) -> String {
    let name = t.name.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = format!("template \"{name}\" for {} {{\n", selector(&t.selector));
    if let Some(r) = &t.requires {
        writeln!(out, "    require other({});", selector(r)).unwrap();
    }
    for s in &t.statements {
        writeln!(out, "    {}", print_statement(s)).unwrap();
    }
    out.push_str("}\n");
    out
}
