//! Random well-formed templates, for round-trip and fuzz testing.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Axis, Condition, EditTemplate, Expr, Number, Selector, Statement};
use crate::asset::Gender;
use crate::schema::{ControlPointSchema, GarmentCategory};
use crate::style::{Closure, Tuck};

const CATEGORIES: [GarmentCategory; 5] = [
    GarmentCategory::Top,
    GarmentCategory::Bottom,
    GarmentCategory::Skirt,
    GarmentCategory::Outerwear,
    GarmentCategory::Dress,
];

fn number<R: Rng>(rng: &mut R) -> Number {
    let value = match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(-0.1..0.1),
        2 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-9..3)),
        _ => (rng.gen_range(-100..100) as f64) / 100.0,
    };
    Number {
        value,
        body_height: rng.gen_bool(0.2),
    }
}

fn word<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(1..8);
    let mut s: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    if rng.gen_bool(0.3) {
        s.push('_');
        s.push_str(&rng.gen_range(0..100).to_string());
    }
    s
}

fn point<R: Rng>(rng: &mut R, schema: &ControlPointSchema, cat: GarmentCategory) -> String {
    let names: Vec<&str> = schema.applicable(cat).map(|p| p.name.as_str()).collect();
    names.choose(rng).expect("every category has points").to_string()
}

/// A point name, a prefix or suffix pattern cut from one, or `*`; always
/// matches at least one point of `cat`.
fn pattern<R: Rng>(rng: &mut R, schema: &ControlPointSchema, cat: GarmentCategory) -> String {
    let name = point(rng, schema, cat);
    match rng.gen_range(0..4) {
        0 => "*".into(),
        1 => {
            let cut = rng.gen_range(0..name.len());
            format!("{}*", &name[..cut])
        }
        2 => {
            let cut = rng.gen_range(1..=name.len());
            format!("*{}", &name[cut..])
        }
        _ => name,
    }
}

fn selector<R: Rng>(rng: &mut R, cat: GarmentCategory) -> Selector {
    let mut conditions = vec![Condition::Category(cat)];
    for _ in 0..rng.gen_range(0..3) {
        conditions.push(if rng.gen_bool(0.5) {
            Condition::Tag(word(rng))
        } else {
            Condition::Gender(*[Gender::Female, Gender::Male, Gender::Unisex].choose(rng).unwrap())
        });
    }
    conditions.shuffle(rng);
    Selector { conditions }
}

fn axis<R: Rng>(rng: &mut R) -> Axis {
    if rng.gen_bool(0.5) {
        Axis::X
    } else {
        Axis::Y
    }
}

fn style<R: Rng>(rng: &mut R) -> Statement {
    let (entry, value) = if rng.gen_bool(0.5) {
        let t = [Tuck::FullTuck, Tuck::Untuck, Tuck::FrontTuck, Tuck::SideTuck, Tuck::HalfTuck];
        ("tuck", t.choose(rng).unwrap().as_str())
    } else {
        ("closure", [Closure::Closed, Closure::Open].choose(rng).unwrap().as_str())
    };
    Statement::SetStyle {
        entry: entry.into(),
        value: value.into(),
    }
}

/// A template that lints clean against `schema`.
pub fn random_template<R: Rng>(rng: &mut R, schema: &ControlPointSchema) -> EditTemplate {
    let cat = *CATEGORIES.choose(rng).unwrap();
    let other = rng.gen_bool(0.5).then(|| *CATEGORIES.choose(rng).unwrap());
    let mut name = word(rng);
    if rng.gen_bool(0.2) {
        name.push_str(" \"q\" \\ x");
    }
    let statements = (0..rng.gen_range(0..8))
        .map(|_| {
            let kind = rng.gen_range(0..if other.is_some() { 9 } else { 6 });
            match (kind, other) {
                (0, _) => Statement::Offset {
                    pattern: pattern(rng, schema, cat),
                    dx: number(rng),
                    dy: number(rng),
                },
                (1, _) => Statement::SetAxis {
                    point: point(rng, schema, cat),
                    axis: axis(rng),
                    expr: Expr::Literal { value: number(rng) },
                },
                (2, _) => Statement::Disable {
                    pattern: pattern(rng, schema, cat),
                },
                (3, _) => Statement::Enable {
                    pattern: pattern(rng, schema, cat),
                },
                (4, _) => style(rng),
                (5, _) | (_, None) => Statement::Offset {
                    pattern: "*".into(),
                    dx: number(rng),
                    dy: Number::lit(0.0),
                },
                (6, Some(o)) => Statement::SetAxis {
                    point: point(rng, schema, cat),
                    axis: axis(rng),
                    expr: Expr::Other {
                        point: point(rng, schema, o),
                        axis: axis(rng),
                        offset: rng.gen_bool(0.5).then(|| number(rng)),
                    },
                },
                (7, Some(o)) => Statement::Align {
                    pattern: pattern(rng, schema, cat),
                    point: point(rng, schema, o),
                    axis: axis(rng),
                },
                (_, Some(_)) => Statement::ClampWithin {
                    pattern: pattern(rng, schema, cat),
                },
            }
        })
        .collect();
    EditTemplate {
        name,
        selector: selector(rng, cat),
        requires: other.map(|o| selector(rng, o)),
        statements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_template, print_template};
    use crate::schema::default_schema;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_templates_round_trip() {
        let schema = default_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let t = random_template(&mut rng, schema);
            let text = print_template(&t);
            let back = parse_template(&text, schema).unwrap_or_else(|e| panic!("{text}\n{e}"));
            assert_eq!(back, t, "{text}");
        }
    }
}
