//! Lexer and recursive-descent parser for `.mdp` problem files and the
//! machine spec blocks. Variables are uppercase-initial, constants
//! lowercase-initial; `#` starts a line comment.

use crate::ast::*;
use std::fmt;
use viewdet::ast::Term;
use viewdet::corpus::{CASpec, Cell, Orientation, TMSpec, TilingSpec};

#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PARSE_ERROR at {}:{}: expected {}",
            self.line, self.col, self.expected
        )
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(usize),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Slash,
    Colon,
    Pipe,
    Arrow,     // ->
    ColonDash, // :-
    Assign,    // :=
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(n) => return write!(f, "identifier `{n}`"),
            Tok::Int(n) => return write!(f, "integer `{n}`"),
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::Comma => "`,`",
            Tok::Dot => "`.`",
            Tok::Slash => "`/`",
            Tok::Colon => "`:`",
            Tok::Pipe => "`|`",
            Tok::Arrow => "`->`",
            Tok::ColonDash => "`:-`",
            Tok::Assign => "`:=`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: usize,
    col: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            i: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.i];
        self.i += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.i).copied()
    }

    fn tokens(mut self) -> PResult<Vec<(Tok, Pos)>> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c == b'#' {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_ascii_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let pos = Pos {
                line: self.line,
                col: self.col,
            };
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, pos));
                return Ok(out);
            };
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b'/' => {
                    self.bump();
                    Tok::Slash
                }
                b'|' => {
                    self.bump();
                    Tok::Pipe
                }
                b'-' => {
                    self.bump();
                    if self.peek() == Some(b'>') {
                        self.bump();
                        Tok::Arrow
                    } else {
                        return Err(ParseError {
                            line: pos.line,
                            col: pos.col,
                            expected: "`->`".into(),
                        });
                    }
                }
                b':' => {
                    self.bump();
                    match self.peek() {
                        Some(b'-') => {
                            self.bump();
                            Tok::ColonDash
                        }
                        Some(b'=') => {
                            self.bump();
                            Tok::Assign
                        }
                        _ => Tok::Colon,
                    }
                }
                c if c.is_ascii_digit() => {
                    let mut n = 0usize;
                    while let Some(c) = self.peek() {
                        if !c.is_ascii_digit() {
                            break;
                        }
                        n = n * 10 + usize::from(self.bump() - b'0');
                    }
                    Tok::Int(n)
                }
                c if is_ident_start(c) => {
                    let start = self.i;
                    while let Some(c) = self.peek() {
                        if !is_ident(c) {
                            break;
                        }
                        self.bump();
                    }
                    Tok::Ident(String::from_utf8_lossy(&self.src[start..self.i]).into_owned())
                }
                other => {
                    return Err(ParseError {
                        line: pos.line,
                        col: pos.col,
                        expected: format!("a token (found `{}`)", other as char),
                    })
                }
            };
            out.push((tok, pos));
        }
    }
}

pub struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    pub fn new(src: &str) -> PResult<Parser> {
        Ok(Parser {
            toks: Lexer::new(src).tokens()?,
            i: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, expected: impl Into<String>) -> PResult<T> {
        let p = self.pos();
        Err(ParseError {
            line: p.line,
            col: p.col,
            expected: expected.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("{t}, found {}", self.peek()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                Ok(n)
            }
            other => self.err(format!("{what}, found {other}")),
        }
    }

    fn int(&mut self, what: &str) -> PResult<usize> {
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            ref other => self.err(format!("{what}, found {other}")),
        }
    }

    // -- terms and atoms ----------------------------------------------------

    fn term(&mut self) -> PResult<Term> {
        let name = self.ident("a term")?;
        let first = name.chars().next().unwrap();
        Ok(if first.is_ascii_uppercase() {
            Term::var(name)
        } else {
            Term::cst(name)
        })
    }

    fn atom(&mut self) -> PResult<RawAtom> {
        let pos = self.pos();
        let pred = self.ident("a predicate name")?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            args.push(self.term()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.term()?);
            }
        }
        self.expect(Tok::RParen)?;
        Ok(RawAtom { pred, args, pos })
    }

    fn atom_list(&mut self) -> PResult<Vec<RawAtom>> {
        let mut atoms = vec![self.atom()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            atoms.push(self.atom()?);
        }
        Ok(atoms)
    }

    fn var_list(&mut self) -> PResult<Vec<String>> {
        self.expect(Tok::LParen)?;
        let mut vars = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let v = self.ident("a variable")?;
                if !v.chars().next().unwrap().is_ascii_uppercase() {
                    return self.err(format!("an uppercase-initial variable, found `{v}`"));
                }
                vars.push(v);
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::RParen)?;
        Ok(vars)
    }

    fn disjuncts(&mut self) -> PResult<Vec<Vec<RawAtom>>> {
        let mut out = vec![self.atom_list()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            out.push(self.atom_list()?);
        }
        Ok(out)
    }

    /// `{ Head :- Body. … goal Pred. }`; rules without a body are allowed as
    /// `Head.`.
    fn program_body(&mut self, name: &str, pos: Pos) -> PResult<ProgramDecl> {
        self.expect(Tok::LBrace)?;
        let mut rules = Vec::new();
        let mut goal = None;
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Ident(n) if n == "goal" => {
                    self.bump();
                    goal = Some(self.ident("the goal predicate")?);
                    self.expect(Tok::Dot)?;
                }
                Tok::Ident(_) => {
                    let head = self.atom()?;
                    let body = if *self.peek() == Tok::ColonDash {
                        self.bump();
                        self.atom_list()?
                    } else {
                        Vec::new()
                    };
                    self.expect(Tok::Dot)?;
                    rules.push((head, body));
                }
                other => return self.err(format!("a rule, `goal`, or `}}`, found {other}")),
            }
        }
        let Some(goal) = goal else {
            return self.err(format!("a `goal` declaration in program {name}"));
        };
        Ok(ProgramDecl {
            name: name.to_string(),
            rules,
            goal,
            pos,
        })
    }

    // -- machine blocks -----------------------------------------------------

    fn cell(&mut self) -> PResult<Cell> {
        let first = self.ident("a cell (symbol or state:symbol)")?;
        if *self.peek() == Tok::Colon {
            self.bump();
            let sym = self.ident("a symbol after `:`")?;
            Ok(Cell::Head(first, sym))
        } else {
            Ok(Cell::Sym(first))
        }
    }

    fn cells(&mut self, n: usize) -> PResult<Vec<Cell>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        for k in 0..n {
            if k > 0 {
                self.expect(Tok::Comma)?;
            }
            out.push(self.cell()?);
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn ints(&mut self, n: usize) -> PResult<Vec<usize>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        for k in 0..n {
            if k > 0 {
                self.expect(Tok::Comma)?;
            }
            out.push(self.int("a state index")?);
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn machine(&mut self) -> PResult<MachineDecl> {
        let kind = self.ident("a machine kind (ca, tm, or tiling)")?;
        self.expect(Tok::LBrace)?;
        let decl = match kind.as_str() {
            "ca" => {
                let mut spec = CASpec {
                    states: 0,
                    rules2: vec![],
                    rules3: vec![],
                    target: 0,
                };
                loop {
                    match self.peek().clone() {
                        Tok::RBrace => break,
                        Tok::Ident(n) if n == "states" => {
                            self.bump();
                            spec.states = self.int("a state count")?;
                        }
                        Tok::Ident(n) if n == "target" => {
                            self.bump();
                            spec.target = self.int("a target state")?;
                        }
                        Tok::Ident(n) if n == "edge" => {
                            self.bump();
                            let k = self.ints(2)?;
                            self.expect(Tok::Arrow)?;
                            let l = self.int("a result state")?;
                            spec.rules2.push(((k[0], k[1]), l));
                        }
                        Tok::Ident(n) if n == "step" => {
                            self.bump();
                            let k = self.ints(3)?;
                            self.expect(Tok::Arrow)?;
                            let l = self.int("a result state")?;
                            spec.rules3.push(((k[0], k[1], k[2]), l));
                        }
                        other => {
                            return self.err(format!(
                                "`states`, `target`, `edge`, or `step`, found {other}"
                            ))
                        }
                    }
                    self.expect(Tok::Dot)?;
                }
                MachineDecl::Ca(spec)
            }
            "tiling" => {
                let mut spec = TilingSpec {
                    tiles: 0,
                    forbidden: vec![],
                    initial: None,
                };
                loop {
                    match self.peek().clone() {
                        Tok::RBrace => break,
                        Tok::Ident(n) if n == "tiles" => {
                            self.bump();
                            spec.tiles = self.int("a tile count")?;
                        }
                        Tok::Ident(n) if n == "initial" => {
                            self.bump();
                            spec.initial = Some(self.int("a tile index")?);
                        }
                        Tok::Ident(n) if n == "forbid" => {
                            self.bump();
                            let o = match self.ident("`horizontal` or `vertical`")?.as_str() {
                                "horizontal" => Orientation::Horizontal,
                                "vertical" => Orientation::Vertical,
                                _ => return self.err("`horizontal` or `vertical`"),
                            };
                            let k = self.ints(2)?;
                            spec.forbidden.push((k[0], k[1], o));
                        }
                        other => {
                            return self
                                .err(format!("`tiles`, `initial`, or `forbid`, found {other}"))
                        }
                    }
                    self.expect(Tok::Dot)?;
                }
                MachineDecl::Tiling(spec)
            }
            "tm" => {
                let mut spec = TMSpec {
                    alphabet: vec![],
                    states: vec![],
                    delta_left: vec![],
                    delta_mid: vec![],
                    delta_right: vec![],
                };
                loop {
                    match self.peek().clone() {
                        Tok::RBrace => break,
                        Tok::Ident(n) if n == "alphabet" || n == "states" => {
                            self.bump();
                            let mut names = Vec::new();
                            while let Tok::Ident(w) = self.peek().clone() {
                                self.bump();
                                names.push(w);
                            }
                            if n == "alphabet" {
                                spec.alphabet = names;
                            } else {
                                spec.states = names;
                            }
                        }
                        Tok::Ident(n) if n == "left" || n == "right" => {
                            self.bump();
                            let k = self.cells(2)?;
                            self.expect(Tok::Arrow)?;
                            let out = self.cell()?;
                            let entry = ((k[0].clone(), k[1].clone()), out);
                            if n == "left" {
                                spec.delta_left.push(entry);
                            } else {
                                spec.delta_right.push(entry);
                            }
                        }
                        Tok::Ident(n) if n == "mid" => {
                            self.bump();
                            let k = self.cells(3)?;
                            self.expect(Tok::Arrow)?;
                            let out = self.cell()?;
                            spec.delta_mid
                                .push(((k[0].clone(), k[1].clone(), k[2].clone()), out));
                        }
                        other => {
                            return self.err(format!(
                                "`alphabet`, `states`, `left`, `mid`, or `right`, found {other}"
                            ))
                        }
                    }
                    self.expect(Tok::Dot)?;
                }
                MachineDecl::Tm(spec)
            }
            _ => return self.err("a machine kind (ca, tm, or tiling)"),
        };
        self.expect(Tok::RBrace)?;
        Ok(decl)
    }

    // -- top level ----------------------------------------------------------

    pub fn file(&mut self) -> PResult<ProblemFile> {
        let mut f = ProblemFile::default();
        loop {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::Eof => return Ok(f),
                Tok::Ident(kw) => match kw.as_str() {
                    "pred" => {
                        self.bump();
                        let name = self.ident("a predicate name")?;
                        self.expect(Tok::Slash)?;
                        let arity = self.int("an arity")?;
                        self.expect(Tok::Dot)?;
                        f.preds.push(PredDecl { name, arity, pos });
                    }
                    "tgd" => {
                        self.bump();
                        let body = self.atom_list()?;
                        self.expect(Tok::Arrow)?;
                        let head = self.atom_list()?;
                        self.expect(Tok::Dot)?;
                        f.tgds.push(TgdDecl { body, head, pos });
                    }
                    "view" => {
                        self.bump();
                        let name = self.ident("a view name")?;
                        let head = self.var_list()?;
                        let body = if *self.peek() == Tok::Assign {
                            self.bump();
                            let d = self.disjuncts()?;
                            self.expect(Tok::Dot)?;
                            ViewBody::Ucq(d)
                        } else {
                            ViewBody::Datalog(self.program_body(&name, pos)?)
                        };
                        f.views.push(ViewDecl {
                            name,
                            head,
                            body,
                            pos,
                        });
                    }
                    "query" => {
                        self.bump();
                        let name = self.ident("a query name")?;
                        let head = self.var_list()?;
                        self.expect(Tok::Assign)?;
                        let disjuncts = self.disjuncts()?;
                        self.expect(Tok::Dot)?;
                        f.queries.push(QueryDecl {
                            name,
                            head,
                            disjuncts,
                            pos,
                        });
                    }
                    "program" => {
                        self.bump();
                        let name = self.ident("a program name")?;
                        let p = self.program_body(&name, pos)?;
                        f.programs.push(p);
                    }
                    "fact" => {
                        self.bump();
                        let a = self.atom()?;
                        self.expect(Tok::Dot)?;
                        f.facts.push(a);
                    }
                    "machine" => {
                        self.bump();
                        f.machines.push(self.machine()?);
                    }
                    _ => {
                        return self.err(format!(
                            "`pred`, `tgd`, `view`, `query`, `program`, `fact`, or `machine`, found `{kw}`"
                        ))
                    }
                },
                other => return self.err(format!("a declaration keyword, found {other}")),
            }
        }
    }
}

pub fn parse(src: &str) -> PResult<ProblemFile> {
    Parser::new(src)?.file()
}
