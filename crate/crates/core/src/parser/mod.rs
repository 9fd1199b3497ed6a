//! Concrete syntax for programs (`.gdl`) and EDB fact files.
//!
//! ```text
//! edb City/2.
//! idb Earthquake/2.
//! Earthquake(c, Flip[0.01]) :- City(c, r).
//! ReportHAlarm(h) => Alarm(h).
//! ```
//!
//! Declarations may appear anywhere in the file; relation references are
//! resolved after the whole file has been read.

mod lexer;

use std::io::Read;
use std::sync::Arc;

use crate::dist::Registry;
use crate::error::{ParseError, SourceSpan};
use crate::model::{
    Atom, Constant, Constraint, ConstraintHead, DeltaTerm, Fact, GenerativeRule, HeadArg, HeadAtom,
    Instance, Program, Schema, Term,
};
use lexer::{tokenize, Tok, Token};

struct RawAtom {
    relation: String,
    args: Vec<(HeadArg, SourceSpan)>,
    span: SourceSpan,
}

enum Statement {
    Rule { head: RawAtom, body: Vec<RawAtom> },
    Constraint { body: Vec<RawAtom>, head: Option<RawAtom> },
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span.clone()
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::new(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<SourceSpan, ParseError> {
        if *self.peek() == tok {
            Ok(self.next().span)
        } else {
            self.error(expected)
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.next().span;
                Ok((s, span))
            }
            _ => self.error(expected),
        }
    }

    fn at_decl(&self) -> bool {
        matches!(self.peek(), Tok::Ident(k) if k == "edb" || k == "idb")
            && matches!(self.peek_at(1), Tok::Ident(_))
    }

    fn decl(&mut self, edb: &mut Schema, idb: &mut Schema) -> Result<(), ParseError> {
        let (kind, _) = self.ident("declaration")?;
        let (name, span) = self.ident("relation name")?;
        self.expect(Tok::Slash, "`/`")?;
        let arity = match *self.peek() {
            Tok::Number(n) if n >= 0.0 && n.fract() == 0.0 => {
                self.next();
                n as usize
            }
            _ => return self.error("arity"),
        };
        self.expect(Tok::Dot, "`.`")?;
        let name: Arc<str> = Arc::from(name.as_str());
        if edb.contains_key(&name) || idb.contains_key(&name) {
            return Err(ParseError::new(span, format!("relation {name} declared twice")));
        }
        if name.contains("__") {
            return Err(ParseError::new(
                span,
                format!("relation {name}: double underscore is reserved"),
            ));
        }
        if kind == "edb" {
            edb.insert(name, arity);
        } else {
            idb.insert(name, arity);
        }
        Ok(())
    }

    fn term(&mut self) -> Result<(HeadArg, SourceSpan), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.next();
                Ok((HeadArg::Term(Term::Const(Constant::num(n))), span))
            }
            Tok::Str(s) => {
                self.next();
                Ok((HeadArg::Term(Term::Const(Constant::sym(&s))), span))
            }
            Tok::Ident(name) => {
                self.next();
                if *self.peek() == Tok::LBracket {
                    self.next();
                    let mut params = Vec::new();
                    loop {
                        let (p, pspan) = self.term()?;
                        match p {
                            HeadArg::Term(t) => params.push(t),
                            HeadArg::Delta(_) => {
                                return Err(ParseError::new(pspan, "nested Δ-term"));
                            }
                        }
                        if *self.peek() == Tok::Comma {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket, "`]` or `,`")?;
                    Ok((
                        HeadArg::Delta(DeltaTerm {
                            dist: Arc::from(name.as_str()),
                            params,
                        }),
                        span,
                    ))
                } else if is_variable(&name) {
                    Ok((HeadArg::Term(Term::var(&name)), span))
                } else {
                    Err(ParseError::new(
                        span,
                        format!(
                            "`{name}` is not a term: variables start lowercase, symbols are quoted"
                        ),
                    ))
                }
            }
            _ => self.error("term"),
        }
    }

    fn atom(&mut self) -> Result<RawAtom, ParseError> {
        let (relation, span) = self.ident("atom")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            args.push(self.term()?);
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        Ok(RawAtom {
            relation,
            args,
            span,
        })
    }

    fn atom_list(&mut self) -> Result<Vec<RawAtom>, ParseError> {
        let mut atoms = vec![self.atom()?];
        while *self.peek() == Tok::Comma {
            self.next();
            atoms.push(self.atom()?);
        }
        Ok(atoms)
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let start = self.span();
        let mut lhs = self.atom_list()?;
        match self.peek() {
            Tok::Implies => {
                if lhs.len() != 1 {
                    return Err(ParseError::new(start, "rule head must be a single atom"));
                }
                self.next();
                let body = self.atom_list()?;
                self.expect(Tok::Dot, "`.` or `,`")?;
                Ok(Statement::Rule {
                    head: lhs.remove(0),
                    body,
                })
            }
            Tok::Arrow => {
                self.next();
                let head = match self.peek() {
                    Tok::Ident(k) if k == "false" && *self.peek_at(1) != Tok::LParen => {
                        self.next();
                        None
                    }
                    _ => Some(self.atom()?),
                };
                self.expect(Tok::Dot, "`.`")?;
                Ok(Statement::Constraint { body: lhs, head })
            }
            _ => self.error("`:-` or `=>`"),
        }
    }
}

fn is_variable(name: &str) -> bool {
    name.chars()
        .next()
        .is_some_and(|c| c.is_lowercase() || c == '_')
}

fn resolve_arity(p: &Program, a: &RawAtom) -> Result<(), ParseError> {
    match p.arity(&a.relation) {
        None => Err(ParseError::new(
            a.span.clone(),
            format!("undeclared relation {}", a.relation),
        )),
        Some(n) if n != a.args.len() => Err(ParseError::new(
            a.span.clone(),
            format!(
                "arity mismatch for {}: declared {n}, used with {}",
                a.relation,
                a.args.len()
            ),
        )),
        Some(_) => Ok(()),
    }
}

fn plain_atom(p: &Program, a: RawAtom, context: &str) -> Result<Atom, ParseError> {
    resolve_arity(p, &a)?;
    let mut args = Vec::with_capacity(a.args.len());
    for (arg, span) in a.args {
        match arg {
            HeadArg::Term(t) => args.push(t),
            HeadArg::Delta(_) => {
                return Err(ParseError::new(span, format!("Δ-term not allowed in {context}")));
            }
        }
    }
    Ok(Atom {
        relation: Arc::from(a.relation.as_str()),
        args,
    })
}

/// Parses a `.gdl` program. Distribution names are resolved against
/// `registry`; well-formedness beyond declarations, arities and names is left
/// to [`crate::validate::validate_program`].
pub fn parse_program(text: &str, registry: &Registry) -> Result<Program, ParseError> {
    let mut parser = Parser::new(text)?;
    let mut program = Program::default();
    let mut statements = Vec::new();
    while *parser.peek() != Tok::Eof {
        if parser.at_decl() {
            parser.decl(&mut program.edb_schema, &mut program.idb_schema)?;
        } else {
            statements.push(parser.statement()?);
        }
    }

    for st in statements {
        match st {
            Statement::Rule { head, body } => {
                resolve_arity(&program, &head)?;
                for (arg, span) in &head.args {
                    if let HeadArg::Delta(d) = arg {
                        if registry.get(&d.dist).is_none() {
                            return Err(ParseError::new(
                                span.clone(),
                                format!("unknown distribution {}", d.dist),
                            ));
                        }
                    }
                }
                let head = HeadAtom {
                    relation: Arc::from(head.relation.as_str()),
                    args: head.args.into_iter().map(|(a, _)| a).collect(),
                };
                let body = body
                    .into_iter()
                    .map(|a| plain_atom(&program, a, "rule body"))
                    .collect::<Result<_, _>>()?;
                program.rules.push(GenerativeRule { head, body });
            }
            Statement::Constraint { body, head } => {
                let body = body
                    .into_iter()
                    .map(|a| plain_atom(&program, a, "constraint"))
                    .collect::<Result<_, _>>()?;
                let head = match head {
                    Some(a) => ConstraintHead::Atom(plain_atom(&program, a, "constraint")?),
                    None => ConstraintHead::Falsum,
                };
                program.constraints.push(Constraint { body, head });
            }
        }
    }
    Ok(program)
}

/// Parses `Rel(c1, ..., cn).` statements over the EDB schema.
pub fn parse_facts(text: &str, schema: &Schema) -> Result<Instance, ParseError> {
    parse_ground(text, schema, "an edb relation")
}

/// Parses a single ground atom such as `Earthquake("Napa", 1)`; the trailing
/// dot is optional.
pub fn parse_fact(text: &str, schema: &Schema) -> Result<Fact, ParseError> {
    let trimmed = text.trim();
    let owned;
    let text = if trimmed.ends_with('.') {
        trimmed
    } else {
        owned = format!("{trimmed}.");
        &owned
    };
    let instance = parse_ground(text, schema, "a known relation")?;
    let mut facts = instance.iter();
    match (facts.next(), facts.next()) {
        (Some(f), None) => Ok(f),
        _ => Err(ParseError::new(SourceSpan::new(1, 1), "expected exactly one fact")),
    }
}

fn parse_ground(text: &str, schema: &Schema, what: &str) -> Result<Instance, ParseError> {
    let mut parser = Parser::new(text)?;
    let mut instance = Instance::new();
    while *parser.peek() != Tok::Eof {
        let (relation, span) = parser.ident("fact")?;
        parser.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            let cspan = parser.span();
            match parser.peek().clone() {
                Tok::Number(n) => args.push(Constant::num(n)),
                Tok::Str(s) => args.push(Constant::sym(&s)),
                other => {
                    return Err(ParseError::new(
                        cspan,
                        format!("malformed constant {}", other.describe()),
                    ))
                }
            }
            parser.next();
            if *parser.peek() == Tok::Comma {
                parser.next();
            } else {
                break;
            }
        }
        parser.expect(Tok::RParen, "`)` or `,`")?;
        parser.expect(Tok::Dot, "`.`")?;
        match schema.get(relation.as_str()) {
            None => {
                return Err(ParseError::new(
                    span,
                    format!("{relation} is not {what}"),
                ))
            }
            Some(&n) if n != args.len() => {
                return Err(ParseError::new(
                    span,
                    format!(
                        "arity mismatch for {relation}: declared {n}, got {}",
                        args.len()
                    ),
                ))
            }
            Some(_) => {}
        }
        instance.insert(Fact::new(&relation, args));
    }
    Ok(instance)
}

/// Cell text to constant: numeric-looking cells become numbers.
pub fn parse_cell(cell: &str) -> Constant {
    let cell = cell.trim();
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Constant::num(v),
        _ => Constant::sym(cell),
    }
}

/// Loads header-less CSV rows as facts of `relation`.
pub fn load_edb_csv<R: Read>(
    relation: &str,
    rows: R,
    schema: &Schema,
) -> Result<Instance, ParseError> {
    let Some(&arity) = schema.get(relation) else {
        return Err(ParseError::new(
            SourceSpan::new(1, 1),
            format!("{relation} is not an edb relation"),
        ));
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(rows);
    let mut instance = Instance::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record
            .map_err(|e| ParseError::new(SourceSpan::new(row, 1), format!("row {row}: {e}")))?;
        if record.len() != arity {
            return Err(ParseError::new(
                SourceSpan::new(row, 1),
                format!("row {row}: expected {arity} columns, got {}", record.len()),
            ));
        }
        instance.insert(Fact::new(relation, record.iter().map(parse_cell).collect()));
    }
    Ok(instance)
}
