//! Recursive-descent parser over the lexer's token stream.
//!
//! Precedence, loosest first: OR, AND, NOT, comparison (including IS, IN,
//! LIKE, BETWEEN), additive, multiplicative, `||`, unary.

use super::ast::*;
use super::lexer::{lex, Lexeme, Tok};
use super::ParseError;

const RESERVED: &[&str] = &[
    "ALL",
    "AND",
    "AS",
    "ASC",
    "BETWEEN",
    "BY",
    "CASE",
    "CAST",
    "CROSS",
    "DESC",
    "DISTINCT",
    "ELSE",
    "END",
    "ESCAPE",
    "EXCEPT",
    "EXISTS",
    "FALSE",
    "FROM",
    "FULL",
    "GLOB",
    "GROUP",
    "HAVING",
    "IN",
    "INNER",
    "INTERSECT",
    "IS",
    "JOIN",
    "LEFT",
    "LIKE",
    "LIMIT",
    "NATURAL",
    "NOT",
    "NULL",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "OUTER",
    "OVER",
    "PARTITION",
    "RIGHT",
    "SELECT",
    "THEN",
    "TRUE",
    "UNION",
    "USING",
    "WHEN",
    "WHERE",
    "WITH",
];

const NILADIC: &[&str] = &["CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP"];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses one SELECT statement (optionally followed by `;`).
pub fn parse_sql(sql: &str) -> Result<Query, ParseError> {
    let tokens = lex(sql)?;
    let mut p = Parser { tokens, pos: 0 };
    let query = p.parse_query()?;
    p.eat(&Tok::Semicolon);
    if !p.at(&Tok::Eof) {
        return Err(p.error("end of query"));
    }
    Ok(query)
}

struct Parser {
    tokens: Vec<Lexeme>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek() == tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        let lx = &self.tokens[self.pos];
        ParseError::new(lx.offset, expected, lx.tok.describe())
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("{:?}", tok.symbol())))
        }
    }

    fn keyword_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Word { value, quote: None } if value.eq_ignore_ascii_case(kw))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.keyword_at(0, kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    /// A word usable as a name: quoted, or bare and not reserved.
    fn at_name(&self) -> bool {
        match self.peek() {
            Tok::Word { quote: Some(_), .. } => true,
            Tok::Word { value, quote: None } => !is_reserved(value),
            _ => false,
        }
    }

    fn parse_ident(&mut self) -> Result<Ident, ParseError> {
        if !self.at_name() {
            return Err(self.error("identifier"));
        }
        match self.advance() {
            Tok::Word { value, quote } => Ok(Ident { value, quote }),
            _ => unreachable!("at_name checked a word"),
        }
    }

    fn parse_alias(&mut self) -> Result<Option<Ident>, ParseError> {
        if self.eat_keyword("AS") {
            if let Tok::Str(s) = self.peek().clone() {
                self.advance();
                return Ok(Some(Ident { value: s, quote: Some('\'') }));
            }
            return self.parse_ident().map(Some);
        }
        if self.at_name() {
            return self.parse_ident().map(Some);
        }
        Ok(None)
    }

    // -- queries ---------------------------------------------------------

    fn parse_query(&mut self) -> Result<Query, ParseError> {
        if self.at_keyword("WITH") {
            return Err(self.error("SELECT (common table expressions are not supported)"));
        }
        let body = self.parse_set_expr()?;
        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            order_by = self.parse_order_items()?;
        }
        let limit = if self.eat_keyword("LIMIT") {
            let first = self.parse_expr()?;
            if self.eat_keyword("OFFSET") {
                Some(Limit { count: first, offset: Some(self.parse_expr()?) })
            } else if self.eat(&Tok::Comma) {
                Some(Limit { count: self.parse_expr()?, offset: Some(first) })
            } else {
                Some(Limit { count: first, offset: None })
            }
        } else {
            None
        };
        Ok(Query { body, order_by, limit })
    }

    fn parse_set_expr(&mut self) -> Result<SetExpr, ParseError> {
        let mut left = self.parse_set_operand()?;
        loop {
            let op = if self.eat_keyword("UNION") {
                SetOperator::Union
            } else if self.eat_keyword("INTERSECT") {
                SetOperator::Intersect
            } else if self.eat_keyword("EXCEPT") {
                SetOperator::Except
            } else {
                return Ok(left);
            };
            let all = self.eat_keyword("ALL");
            let right = self.parse_set_operand()?;
            left = SetExpr::SetOp { op, all, left: Box::new(left), right: Box::new(right) };
        }
    }

    fn parse_set_operand(&mut self) -> Result<SetExpr, ParseError> {
        if self.at(&Tok::LParen) {
            self.advance();
            let q = self.parse_query()?;
            self.expect(&Tok::RParen)?;
            return Ok(SetExpr::Query(Box::new(q)));
        }
        Ok(SetExpr::Select(Box::new(self.parse_select()?)))
    }

    fn parse_select(&mut self) -> Result<Select, ParseError> {
        self.expect_keyword("SELECT")?;
        let distinct = self.eat_keyword("DISTINCT");
        if !distinct {
            self.eat_keyword("ALL");
        }
        let mut items = vec![self.parse_select_item()?];
        while self.eat(&Tok::Comma) {
            items.push(self.parse_select_item()?);
        }
        let mut from = Vec::new();
        if self.eat_keyword("FROM") {
            from.push(self.parse_table_with_joins()?);
            while self.eat(&Tok::Comma) {
                from.push(self.parse_table_with_joins()?);
            }
        }
        let selection = if self.eat_keyword("WHERE") { Some(self.parse_expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            group_by.push(self.parse_expr()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.parse_expr()?);
            }
        }
        let having = if self.eat_keyword("HAVING") { Some(self.parse_expr()?) } else { None };
        Ok(Select { distinct, items, from, selection, group_by, having })
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, ParseError> {
        if self.eat(&Tok::Star) {
            return Ok(SelectItem::Wildcard);
        }
        if self.at_name() && self.peek_at(1) == &Tok::Dot && self.peek_at(2) == &Tok::Star {
            let q = self.parse_ident()?;
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_order_items(&mut self) -> Result<Vec<OrderItem>, ParseError> {
        let mut items = Vec::new();
        loop {
            let expr = self.parse_expr()?;
            let asc = if self.eat_keyword("ASC") {
                Some(true)
            } else if self.eat_keyword("DESC") {
                Some(false)
            } else {
                None
            };
            items.push(OrderItem { expr, asc });
            if !self.eat(&Tok::Comma) {
                return Ok(items);
            }
        }
    }

    fn parse_table_with_joins(&mut self) -> Result<TableWithJoins, ParseError> {
        let relation = self.parse_table_factor()?;
        let mut joins = Vec::new();
        loop {
            let start = self.pos;
            let natural = self.eat_keyword("NATURAL");
            let kind = if self.eat_keyword("LEFT") {
                self.eat_keyword("OUTER");
                if natural {
                    JoinKind::NaturalLeft
                } else {
                    JoinKind::Left
                }
            } else if self.eat_keyword("RIGHT") {
                self.eat_keyword("OUTER");
                JoinKind::Right
            } else if self.eat_keyword("FULL") {
                self.eat_keyword("OUTER");
                JoinKind::Full
            } else if self.eat_keyword("CROSS") {
                JoinKind::Cross
            } else {
                self.eat_keyword("INNER");
                if natural {
                    JoinKind::NaturalInner
                } else {
                    JoinKind::Inner
                }
            };
            if !self.at_keyword("JOIN") {
                if self.pos != start {
                    // a join modifier was consumed without JOIN
                    return Err(self.error("JOIN"));
                }
                return Ok(TableWithJoins { relation, joins });
            }
            self.advance();
            let relation = self.parse_table_factor()?;
            let constraint = if self.eat_keyword("ON") {
                Some(JoinConstraint::On(self.parse_expr()?))
            } else if self.eat_keyword("USING") {
                self.expect(&Tok::LParen)?;
                let mut cols = vec![self.parse_ident()?];
                while self.eat(&Tok::Comma) {
                    cols.push(self.parse_ident()?);
                }
                self.expect(&Tok::RParen)?;
                Some(JoinConstraint::Using(cols))
            } else {
                None
            };
            joins.push(Join { kind, relation, constraint });
        }
    }

    fn parse_table_factor(&mut self) -> Result<TableFactor, ParseError> {
        if self.eat(&Tok::LParen) {
            if self.at_keyword("SELECT") || self.at(&Tok::LParen) && self.keyword_at(1, "SELECT") {
                let q = self.parse_query()?;
                self.expect(&Tok::RParen)?;
                let alias = self.parse_alias()?;
                return Ok(TableFactor::Derived { subquery: Box::new(q), alias });
            }
            let inner = self.parse_table_with_joins()?;
            self.expect(&Tok::RParen)?;
            return Ok(TableFactor::Nested(Box::new(inner)));
        }
        let mut name = vec![self.parse_ident()?];
        while self.at(&Tok::Dot) {
            self.advance();
            name.push(self.parse_ident()?);
        }
        let alias = self.parse_alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    // -- expressions -----------------------------------------------------

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_and()?;
        while self.eat_keyword("OR") {
            let right = self.parse_and()?;
            left = Expr::Binary { left: Box::new(left), op: BinaryOp::Or, right: Box::new(right) };
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_not()?;
        while self.eat_keyword("AND") {
            let right = self.parse_not()?;
            left = Expr::Binary { left: Box::new(left), op: BinaryOp::And, right: Box::new(right) };
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.at_keyword("NOT") && !self.keyword_at(1, "EXISTS") {
            self.advance();
            let inner = self.parse_not()?;
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(inner) });
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_additive()?;
        loop {
            if self.eat_keyword("IS") {
                let negated = self.eat_keyword("NOT");
                self.expect_keyword("NULL")?;
                left = Expr::IsNull { expr: Box::new(left), negated };
                continue;
            }
            let negated =
                self.at_keyword("NOT") && ["IN", "LIKE", "GLOB", "BETWEEN"].iter().any(|k| self.keyword_at(1, k));
            if negated {
                self.advance();
            }
            if self.eat_keyword("IN") {
                self.expect(&Tok::LParen)?;
                if self.at_keyword("SELECT") || self.at(&Tok::LParen) && self.keyword_at(1, "SELECT") {
                    let q = self.parse_query()?;
                    self.expect(&Tok::RParen)?;
                    left = Expr::InSubquery { expr: Box::new(left), subquery: Box::new(q), negated };
                } else {
                    let mut list = Vec::new();
                    if !self.at(&Tok::RParen) {
                        list.push(as_value(self.parse_expr()?));
                        while self.eat(&Tok::Comma) {
                            list.push(as_value(self.parse_expr()?));
                        }
                    }
                    self.expect(&Tok::RParen)?;
                    left = Expr::InList { expr: Box::new(left), list, negated };
                }
                continue;
            }
            if self.eat_keyword("BETWEEN") {
                let low = as_value(self.parse_additive()?);
                self.expect_keyword("AND")?;
                let high = as_value(self.parse_additive()?);
                left = Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated };
                continue;
            }
            let glob = self.at_keyword("GLOB");
            if self.eat_keyword("LIKE") || self.eat_keyword("GLOB") {
                let pattern = as_value(self.parse_additive()?);
                let escape = if self.eat_keyword("ESCAPE") { Some(Box::new(self.parse_additive()?)) } else { None };
                left = Expr::Like { expr: Box::new(left), pattern: Box::new(pattern), negated, glob, escape };
                continue;
            }
            if negated {
                return Err(self.error("IN, LIKE, GLOB or BETWEEN"));
            }
            let op = match self.peek() {
                Tok::Eq => BinaryOp::Eq,
                Tok::EqEq => BinaryOp::EqEq,
                Tok::Neq => BinaryOp::NotEq,
                Tok::LtGt => BinaryOp::LtGt,
                Tok::Lt => BinaryOp::Lt,
                Tok::LtEq => BinaryOp::LtEq,
                Tok::Gt => BinaryOp::Gt,
                Tok::GtEq => BinaryOp::GtEq,
                _ => return Ok(left),
            };
            self.advance();
            let right = as_value(self.parse_additive()?);
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
    }

    fn parse_additive(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Plus,
                Tok::Minus => BinaryOp::Minus,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.parse_multiplicative()?;
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_concat()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Multiply,
                Tok::Slash => BinaryOp::Divide,
                Tok::Percent => BinaryOp::Modulo,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.parse_concat()?;
            left = Expr::Binary { left: Box::new(left), op, right: Box::new(right) };
        }
    }

    fn parse_concat(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_unary()?;
        while self.eat(&Tok::Concat) {
            let right = self.parse_unary()?;
            left = Expr::Binary { left: Box::new(left), op: BinaryOp::Concat, right: Box::new(right) };
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.advance();
                // a sign directly on a number folds into its lexeme
                if let Tok::Number(n) = self.peek().clone() {
                    self.advance();
                    return Ok(Expr::Literal(Literal::Number(format!("-{n}"))));
                }
                let e = self.parse_unary()?;
                Ok(Expr::Unary { op: UnaryOp::Minus, expr: Box::new(e) })
            }
            Tok::Plus => {
                self.advance();
                let e = self.parse_unary()?;
                Ok(Expr::Unary { op: UnaryOp::Plus, expr: Box::new(e) })
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(Expr::Literal(Literal::Number(n)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String { value: s, quote: '\'' }))
            }
            Tok::LParen => {
                self.advance();
                if self.at_keyword("SELECT") || self.at(&Tok::LParen) && self.keyword_at(1, "SELECT") {
                    let q = self.parse_query()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let e = self.parse_expr()?;
                self.expect(&Tok::RParen)?;
                Ok(Expr::Nested(Box::new(e)))
            }
            Tok::Word { value, quote: None } => {
                let upper = value.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::Null))
                    }
                    "TRUE" | "FALSE" => {
                        self.advance();
                        Ok(Expr::Literal(Literal::Boolean(upper == "TRUE")))
                    }
                    "CASE" => self.parse_case(),
                    "CAST" => self.parse_cast(),
                    "EXISTS" => self.parse_exists(false),
                    "NOT" if self.keyword_at(1, "EXISTS") => {
                        self.advance();
                        self.parse_exists(true)
                    }
                    _ if NILADIC.contains(&upper.as_str()) => {
                        self.advance();
                        Ok(Expr::Keyword(upper))
                    }
                    _ if self.peek_at(1) == &Tok::LParen => self.parse_function(),
                    _ if is_reserved(&value) => Err(self.error("expression")),
                    _ => self.parse_column(),
                }
            }
            Tok::Word { .. } => self.parse_column(),
            _ => Err(self.error("expression")),
        }
    }

    fn parse_column(&mut self) -> Result<Expr, ParseError> {
        let first = self.parse_ident()?;
        if self.at(&Tok::Dot) {
            self.advance();
            let name = self.parse_ident()?;
            return Ok(Expr::Column { qualifier: Some(first), name });
        }
        Ok(Expr::Column { qualifier: None, name: first })
    }

    fn parse_function(&mut self) -> Result<Expr, ParseError> {
        let name = match self.advance() {
            Tok::Word { value, quote } => Ident { value, quote },
            _ => unreachable!("caller checked a word"),
        };
        self.expect(&Tok::LParen)?;
        let distinct = self.eat_keyword("DISTINCT");
        let mut star = false;
        let mut args = Vec::new();
        if self.eat(&Tok::Star) {
            star = true;
        } else if !self.at(&Tok::RParen) {
            args.push(self.parse_expr()?);
            while self.eat(&Tok::Comma) {
                args.push(self.parse_expr()?);
            }
        }
        self.expect(&Tok::RParen)?;
        let over = if self.eat_keyword("OVER") {
            self.expect(&Tok::LParen)?;
            let mut partition_by = Vec::new();
            if self.eat_keyword("PARTITION") {
                self.expect_keyword("BY")?;
                partition_by.push(self.parse_expr()?);
                while self.eat(&Tok::Comma) {
                    partition_by.push(self.parse_expr()?);
                }
            }
            let mut order_by = Vec::new();
            if self.eat_keyword("ORDER") {
                self.expect_keyword("BY")?;
                order_by = self.parse_order_items()?;
            }
            self.expect(&Tok::RParen)?;
            Some(WindowSpec { partition_by, order_by })
        } else {
            None
        };
        Ok(Expr::Function(Function { name, distinct, star, args, over }))
    }

    fn parse_case(&mut self) -> Result<Expr, ParseError> {
        self.expect_keyword("CASE")?;
        let operand = if self.at_keyword("WHEN") { None } else { Some(Box::new(self.parse_expr()?)) };
        let mut whens = Vec::new();
        while self.eat_keyword("WHEN") {
            let cond = self.parse_expr()?;
            self.expect_keyword("THEN")?;
            whens.push((cond, self.parse_expr()?));
        }
        if whens.is_empty() {
            return Err(self.error("WHEN"));
        }
        let else_result = if self.eat_keyword("ELSE") { Some(Box::new(self.parse_expr()?)) } else { None };
        self.expect_keyword("END")?;
        Ok(Expr::Case { operand, whens, else_result })
    }

    fn parse_cast(&mut self) -> Result<Expr, ParseError> {
        self.expect_keyword("CAST")?;
        self.expect(&Tok::LParen)?;
        let expr = self.parse_expr()?;
        self.expect_keyword("AS")?;
        let mut parts = Vec::new();
        while let Tok::Word { value, quote: None } = self.peek().clone() {
            self.advance();
            parts.push(value);
        }
        if parts.is_empty() {
            return Err(self.error("type name"));
        }
        let mut data_type = parts.join(" ");
        if self.eat(&Tok::LParen) {
            let mut dims = Vec::new();
            loop {
                match self.advance() {
                    Tok::Number(n) => dims.push(n),
                    _ => return Err(self.error("type size")),
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            data_type = format!("{data_type}({})", dims.join(", "));
        }
        self.expect(&Tok::RParen)?;
        Ok(Expr::Cast { expr: Box::new(expr), data_type })
    }

    fn parse_exists(&mut self, negated: bool) -> Result<Expr, ParseError> {
        self.expect_keyword("EXISTS")?;
        self.expect(&Tok::LParen)?;
        let q = self.parse_query()?;
        self.expect(&Tok::RParen)?;
        Ok(Expr::Exists { subquery: Box::new(q), negated })
    }
}

/// In value positions (right of a comparison, IN lists, BETWEEN bounds,
/// LIKE patterns) an unqualified double-quoted name is a string literal,
/// following SQLite's fallback for unresolvable double-quoted names.
fn as_value(expr: Expr) -> Expr {
    match expr {
        Expr::Column { qualifier: None, name: Ident { value, quote: Some('"') } } => {
            Expr::Literal(Literal::String { value, quote: '"' })
        }
        other => other,
    }
}
