//! Tiny interpreter for `SELECT * FROM isa WHERE <filter>`: comparisons,
//! AND/OR/NOT, parentheses, string and integer literals, `--` comments.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Num(i64),
    Op(&'static str),
    LParen,
    RParen,
    Star,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => w.clone(),
        Tok::Str(s) => format!("'{s}'"),
        Tok::Num(n) => n.to_string(),
        Tok::Op(o) => o.to_string(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Star => "*".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SqlError(pub String);

fn syntax(near: impl std::fmt::Display) -> SqlError {
    SqlError(format!("SQL syntax error near {near}"))
}

fn lex(sql: &str) -> Result<Vec<Tok>, SqlError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(SqlError("SQL syntax error: unterminated quoted string".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                out.push(Tok::Str(s));
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '=' => {
                out.push(Tok::Op("="));
                i += 1;
            }
            '<' | '>' | '!' => {
                let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let op = match two.as_str() {
                    "<=" => "<=",
                    ">=" => ">=",
                    "<>" => "<>",
                    "!=" => "!=",
                    _ if c == '<' => "<",
                    _ if c == '>' => ">",
                    _ => return Err(syntax(format!("{c:?}"))),
                };
                i += op.len();
                out.push(Tok::Op(op));
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Tok::Num(text.parse().map_err(|_| syntax(&text))?));
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                out.push(Tok::Word(chars[start..i].iter().collect()));
            }
            _ => return Err(syntax(format!("{c:?}"))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Str(String),
    Num(i64),
}

#[derive(Debug)]
enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Cmp(Operand, &'static str, Operand),
}

#[derive(Debug)]
enum Operand {
    Column(String),
    Lit(Val),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, SqlError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| syntax("end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        match self.next()? {
            Tok::Word(w) if w.eq_ignore_ascii_case(kw) => Ok(()),
            t => Err(syntax(describe(&t))),
        }
    }

    fn or(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.and()?;
        while self.keyword("or") {
            self.pos += 1;
            e = Expr::Or(Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, SqlError> {
        let mut e = self.unary()?;
        while self.keyword("and") {
            self.pos += 1;
            e = Expr::And(Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.keyword("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let e = self.or()?;
            return match self.next()? {
                Tok::RParen => Ok(e),
                t => Err(syntax(describe(&t))),
            };
        }
        let lhs = self.operand()?;
        let op = match self.next()? {
            Tok::Op(o) => o,
            t => return Err(syntax(describe(&t))),
        };
        Ok(Expr::Cmp(lhs, op, self.operand()?))
    }

    fn operand(&mut self) -> Result<Operand, SqlError> {
        match self.next()? {
            Tok::Str(s) => Ok(Operand::Lit(Val::Str(s))),
            Tok::Num(n) => Ok(Operand::Lit(Val::Num(n))),
            Tok::Word(w) if !is_reserved(&w) => Ok(Operand::Column(w.to_ascii_lowercase())),
            t => Err(syntax(describe(&t))),
        }
    }
}

fn is_reserved(w: &str) -> bool {
    ["and", "or", "not", "select", "from", "where", "union", "order", "by"]
        .iter()
        .any(|k| w.eq_ignore_ascii_case(k))
}

/// A parsed `SELECT * FROM <table> WHERE ...` statement.
pub(crate) struct Query {
    filter: Expr,
}

pub(crate) fn parse(sql: &str) -> Result<Query, SqlError> {
    let mut p = Parser { toks: lex(sql)?, pos: 0 };
    p.expect_kw("select")?;
    match p.next()? {
        Tok::Star => {}
        t => return Err(syntax(describe(&t))),
    }
    p.expect_kw("from")?;
    match p.next()? {
        Tok::Word(w) if w.eq_ignore_ascii_case("isa") => {}
        Tok::Word(w) => return Err(SqlError(format!("no such table: {w}"))),
        t => return Err(syntax(describe(&t))),
    }
    p.expect_kw("where")?;
    let filter = p.or()?;
    if let Some(t) = p.peek() {
        return Err(syntax(describe(t)));
    }
    Ok(Query { filter })
}

/// Row access by column name.
pub(crate) trait Row {
    fn column(&self, name: &str) -> Option<ColumnValue<'_>>;
}

pub(crate) enum ColumnValue<'a> {
    Text(&'a str),
    Int(i64),
}

fn value(o: &Operand, row: &dyn Row) -> Result<Val, SqlError> {
    match o {
        Operand::Lit(v) => Ok(v.clone()),
        Operand::Column(c) => match row.column(c) {
            Some(ColumnValue::Text(s)) => Ok(Val::Str(s.to_string())),
            Some(ColumnValue::Int(n)) => Ok(Val::Num(n)),
            None => Err(SqlError(format!("no such column: {c}"))),
        },
    }
}

fn eval(e: &Expr, row: &dyn Row) -> Result<bool, SqlError> {
    Ok(match e {
        Expr::Or(a, b) => eval(a, row)? || eval(b, row)?,
        Expr::And(a, b) => eval(a, row)? && eval(b, row)?,
        Expr::Not(a) => !eval(a, row)?,
        Expr::Cmp(l, op, r) => {
            let ord = match (value(l, row)?, value(r, row)?) {
                (Val::Num(a), Val::Num(b)) => Some(a.cmp(&b)),
                (Val::Str(a), Val::Str(b)) => Some(a.cmp(&b)),
                _ => None,
            };
            match (ord, *op) {
                (None, "<>" | "!=") => true,
                (None, _) => false,
                (Some(o), "=") => o == Ordering::Equal,
                (Some(o), "<>" | "!=") => o != Ordering::Equal,
                (Some(o), "<") => o == Ordering::Less,
                (Some(o), ">") => o == Ordering::Greater,
                (Some(o), "<=") => o != Ordering::Greater,
                (Some(o), ">=") => o != Ordering::Less,
                _ => false,
            }
        }
    })
}

impl Query {
    pub fn select<'r, R: Row>(&self, rows: &'r [R]) -> Result<Vec<&'r R>, SqlError> {
        let mut out = Vec::new();
        for r in rows {
            if eval(&self.filter, r)? {
                out.push(r);
            }
        }
        Ok(out)
    }
}
