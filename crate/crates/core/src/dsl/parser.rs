use super::lexer::{lex, Tok};
use super::{
    Axis, Condition, DslError, EditTemplate, ErrorKind, Expr, Number, Pos, Selector, Statement,
};
use crate::schema::{ControlPointSchema, GarmentCategory};
use crate::style::StyleVector;

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    schema: &'a ControlPointSchema,
}

fn syntax(pos: Pos, msg: impl Into<String>) -> DslError {
    DslError::new(pos, ErrorKind::Syntax, msg.into())
}

fn lint(pos: Pos, msg: impl Into<String>) -> DslError {
    DslError::new(pos, ErrorKind::Lint, msg.into())
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, DslError> {
        let (t, pos) = self.next();
        if t == want {
            Ok(pos)
        } else {
            Err(syntax(pos, format!("expected {}, found {}", want.describe(), t.describe())))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Pos, DslError> {
        let (t, pos) = self.next();
        match t {
            Tok::Word(w) if w == kw => Ok(pos),
            other => Err(syntax(pos, format!("expected '{kw}', found {}", other.describe()))),
        }
    }

    /// A plain identifier (no glob).
    fn ident(&mut self, what: &str) -> Result<(String, Pos), DslError> {
        let (t, pos) = self.next();
        match t {
            Tok::Word(w) if !w.contains('*') => Ok((w, pos)),
            Tok::Word(w) => Err(syntax(pos, format!("{what} '{w}' must not contain '*'"))),
            other => Err(syntax(pos, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn template(&mut self) -> Result<EditTemplate, DslError> {
        self.keyword("template")?;
        let name = match self.next() {
            (Tok::Str(s), _) => s,
            (other, pos) => {
                return Err(syntax(pos, format!("expected template name string, found {}", other.describe())))
            }
        };
        self.keyword("for")?;
        let selector = self.selector()?;
        self.expect(Tok::LBrace)?;
        let mut requires: Option<(Selector, Pos)> = None;
        let mut statements = Vec::new();
        let mut other_uses: Vec<Pos> = Vec::new();
        let target_cat = single_category(&selector.0, selector.1)?;
        loop {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::RBrace => {
                    self.next();
                    break;
                }
                Tok::Word(w) if w == "require" => {
                    self.next();
                    self.keyword("other")?;
                    self.expect(Tok::LParen)?;
                    let (sel, sel_pos) = self.selector()?;
                    single_category(&sel, sel_pos)?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Semi)?;
                    if requires.is_some() {
                        return Err(lint(pos, "a template may declare only one 'require'"));
                    }
                    requires = Some((sel, pos));
                }
                Tok::Word(_) => {
                    let other_cat = requires
                        .as_ref()
                        .and_then(|(s, _)| s.categories().first().copied());
                    let (stmt, uses) = self.statement(target_cat, other_cat)?;
                    other_uses.extend(uses);
                    statements.push(stmt);
                }
                other => {
                    return Err(syntax(pos, format!("expected a statement or '}}', found {}", other.describe())))
                }
            }
        }
        if requires.is_none() {
            if let Some(&pos) = other_uses.first() {
                return Err(lint(pos, "'other' used without 'require other(...)'"));
            }
        }
        Ok(EditTemplate {
            name,
            selector: selector.0,
            requires: requires.map(|(s, _)| s),
            statements,
        })
    }

    fn selector(&mut self) -> Result<(Selector, Pos), DslError> {
        let start = self.pos();
        let mut conditions = vec![self.condition()?];
        while *self.peek() == Tok::Comma {
            self.next();
            conditions.push(self.condition()?);
        }
        Ok((Selector { conditions }, start))
    }

    fn condition(&mut self) -> Result<Condition, DslError> {
        let (key, key_pos) = self.ident("selector key")?;
        self.expect(Tok::Eq)?;
        let (value, pos) = self.ident("selector value")?;
        match key.as_str() {
            "category" => value
                .parse()
                .map(Condition::Category)
                .map_err(|e: String| lint(pos, e)),
            "gender" => value.parse().map(Condition::Gender).map_err(|e: String| lint(pos, e)),
            "tag" => Ok(Condition::Tag(value)),
            other => Err(syntax(
                key_pos,
                format!("unknown selector key '{other}' (expected category, tag or gender)"),
            )),
        }
    }

    fn statement(
        &mut self,
        target: Option<GarmentCategory>,
        other: Option<GarmentCategory>,
    ) -> Result<(Statement, Vec<Pos>), DslError> {
        let (kw, kw_pos) = self.ident("statement")?;
        let mut uses = Vec::new();
        let stmt = match kw.as_str() {
            "offset" => {
                let pattern = self.pset(target)?;
                self.keyword("by")?;
                self.expect(Tok::LParen)?;
                let dx = self.number()?;
                self.expect(Tok::Comma)?;
                let dy = self.number()?;
                self.expect(Tok::RParen)?;
                Statement::Offset { pattern, dx, dy }
            }
            "set" => {
                if matches!(self.peek(), Tok::Word(w) if w == "style") {
                    self.next();
                    let (entry, entry_pos) = self.ident("style entry")?;
                    self.expect(Tok::Eq)?;
                    let (value, value_pos) = self.ident("style value")?;
                    let mut probe = StyleVector::default();
                    if let Err(e) = probe.set(&entry, &value) {
                        let pos = if StyleVector::ENTRIES.contains(&entry.as_str()) {
                            value_pos
                        } else {
                            entry_pos
                        };
                        return Err(lint(pos, e.to_string()));
                    }
                    Statement::SetStyle { entry, value }
                } else {
                    let point = self.pref(target)?;
                    self.expect(Tok::Dot)?;
                    let axis = self.axis()?;
                    self.expect(Tok::Eq)?;
                    let expr = if matches!(self.peek(), Tok::Word(w) if w == "other") {
                        uses.push(self.pos());
                        self.next();
                        self.expect(Tok::Dot)?;
                        let point = self.pref(other)?;
                        self.expect(Tok::Dot)?;
                        let axis = self.axis()?;
                        let offset = if *self.peek() == Tok::Plus {
                            self.next();
                            Some(self.number()?)
                        } else {
                            None
                        };
                        Expr::Other {
                            point,
                            axis,
                            offset,
                        }
                    } else {
                        Expr::Literal {
                            value: self.number()?,
                        }
                    };
                    Statement::SetAxis { point, axis, expr }
                }
            }
            "align" => {
                let pattern = self.pset(target)?;
                self.keyword("with")?;
                uses.push(self.keyword("other")?);
                self.expect(Tok::Dot)?;
                let point = self.pref(other)?;
                self.expect(Tok::Dot)?;
                let axis = self.axis()?;
                Statement::Align {
                    pattern,
                    point,
                    axis,
                }
            }
            "disable" => Statement::Disable {
                pattern: self.pset(target)?,
            },
            "enable" => Statement::Enable {
                pattern: self.pset(target)?,
            },
            "clamp" => {
                let pattern = self.pset(target)?;
                self.keyword("within")?;
                uses.push(self.keyword("other")?);
                Statement::ClampWithin { pattern }
            }
            other => return Err(syntax(kw_pos, format!("unknown statement '{other}'"))),
        };
        self.expect(Tok::Semi)?;
        Ok((stmt, uses))
    }

    fn number(&mut self) -> Result<Number, DslError> {
        let (t, pos) = self.next();
        let Tok::Num(value) = t else {
            return Err(syntax(pos, format!("expected a number, found {}", t.describe())));
        };
        let body_height = match self.peek().clone() {
            Tok::Star => {
                self.next();
                let (w, wpos) = self.ident("'body_height'")?;
                if w != "body_height" {
                    return Err(syntax(wpos, format!("expected 'body_height', found '{w}'")));
                }
                true
            }
            Tok::Word(w) if w == "*body_height" => {
                self.next();
                true
            }
            _ => false,
        };
        Ok(Number { value, body_height })
    }

    fn axis(&mut self) -> Result<Axis, DslError> {
        match self.next() {
            (Tok::Word(w), _) if w == "x" => Ok(Axis::X),
            (Tok::Word(w), _) if w == "y" => Ok(Axis::Y),
            (t, pos) => Err(syntax(pos, format!("expected axis 'x' or 'y', found {}", t.describe()))),
        }
    }

    fn pset(&mut self, category: Option<GarmentCategory>) -> Result<String, DslError> {
        self.keyword("points")?;
        self.expect(Tok::LParen)?;
        let (pattern, pos) = match self.next() {
            (Tok::Word(w), pos) => (w, pos),
            (Tok::Star, pos) => ("*".to_string(), pos),
            (t, pos) => return Err(syntax(pos, format!("expected a point pattern, found {}", t.describe()))),
        };
        self.expect(Tok::RParen)?;
        if pattern.matches('*').count() > 1 {
            return Err(lint(pos, format!("pattern '{pattern}' has more than one '*'")));
        }
        let ids = self.schema.matching(&pattern);
        if ids.is_empty() {
            return Err(lint(pos, format!("pattern '{pattern}' matches no point")));
        }
        if let Some(cat) = category {
            if !ids.iter().any(|&i| self.schema.point(i).applies_to(cat)) {
                return Err(lint(pos, format!("pattern '{pattern}' matches no {cat} point")));
            }
        }
        Ok(pattern)
    }

    fn pref(&mut self, category: Option<GarmentCategory>) -> Result<String, DslError> {
        self.keyword("point")?;
        self.expect(Tok::LParen)?;
        let (name, pos) = self.ident("point name")?;
        self.expect(Tok::RParen)?;
        let Some(def) = self.schema.by_name(&name) else {
            return Err(lint(pos, format!("unknown point '{name}'")));
        };
        if let Some(cat) = category {
            if !def.applies_to(cat) {
                return Err(lint(pos, format!("point '{name}' does not exist for {cat}")));
            }
        }
        Ok(name)
    }
}

fn single_category(sel: &Selector, pos: Pos) -> Result<Option<GarmentCategory>, DslError> {
    let cats = sel.categories();
    match cats.split_first() {
        None => Ok(None),
        Some((first, rest)) if rest.iter().all(|c| c == first) => Ok(Some(*first)),
        Some(_) => Err(lint(pos, "selector requires more than one category")),
    }
}

/// Parses one or more templates.
pub fn parse_templates(
    src: &str,
    schema: &ControlPointSchema,
) -> Result<Vec<EditTemplate>, DslError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        schema,
    };
    let mut out = vec![p.template()?];
    while *p.peek() != Tok::Eof {
        out.push(p.template()?);
    }
    Ok(out)
}

/// Parses exactly one template.
pub fn parse_template(src: &str, schema: &ControlPointSchema) -> Result<EditTemplate, DslError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        schema,
    };
    let t = p.template()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.pos(), format!("expected end of input, found {}", p.peek().describe())));
    }
    Ok(t)
}
