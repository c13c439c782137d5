//! Depth-first walk collecting the tables, columns and values a query
//! references. Clause order: select, from, where, group by, having,
//! order by, limit; subqueries are entered where they occur.

use std::collections::HashSet;

use super::ast::*;
use super::{parse_sql, ParseError};
use crate::types::{DbEntity, EntitySet, EntityType};

pub fn extract_entities(query: &Query) -> EntitySet {
    let mut x = Extractor::default();
    x.query(query);
    x.set
}

/// Parses `sql` and extracts its entities.
pub fn entities_from_sql(sql: &str) -> Result<EntitySet, ParseError> {
    parse_sql(sql).map(|q| extract_entities(&q))
}

#[derive(Default)]
struct Extractor {
    set: EntitySet,
}

type Aliases = HashSet<String>;

fn select_aliases(select: &Select) -> Aliases {
    select
        .items
        .iter()
        .filter_map(|item| match item {
            SelectItem::Expr { alias: Some(a), .. } => Some(a.value.to_lowercase()),
            _ => None,
        })
        .collect()
}

fn leftmost_select(body: &SetExpr) -> Option<&Select> {
    match body {
        SetExpr::Select(s) => Some(s),
        SetExpr::Query(q) => leftmost_select(&q.body),
        SetExpr::SetOp { left, .. } => leftmost_select(left),
    }
}

impl Extractor {
    fn add(&mut self, text: &str, ty: EntityType) {
        if let Ok(e) = DbEntity::new(text, ty) {
            self.set.insert(e);
        }
    }

    fn query(&mut self, q: &Query) {
        self.set_expr(&q.body);
        let aliases = leftmost_select(&q.body).map(select_aliases).unwrap_or_default();
        for item in &q.order_by {
            self.expr(&item.expr, &aliases);
        }
        if let Some(limit) = &q.limit {
            let none = Aliases::new();
            self.expr(&limit.count, &none);
            if let Some(off) = &limit.offset {
                self.expr(off, &none);
            }
        }
    }

    fn set_expr(&mut self, body: &SetExpr) {
        match body {
            SetExpr::Select(s) => self.select(s),
            SetExpr::Query(q) => self.query(q),
            SetExpr::SetOp { left, right, .. } => {
                self.set_expr(left);
                self.set_expr(right);
            }
        }
    }

    fn select(&mut self, s: &Select) {
        let none = Aliases::new();
        for item in &s.items {
            if let SelectItem::Expr { expr, .. } = item {
                self.expr(expr, &none);
            }
        }
        for twj in &s.from {
            self.table_with_joins(twj);
        }
        if let Some(w) = &s.selection {
            self.expr(w, &none);
        }
        let aliases = select_aliases(s);
        for g in &s.group_by {
            self.expr(g, &aliases);
        }
        if let Some(h) = &s.having {
            self.expr(h, &aliases);
        }
    }

    fn table_with_joins(&mut self, twj: &TableWithJoins) {
        self.table_factor(&twj.relation);
        for join in &twj.joins {
            self.table_factor(&join.relation);
            match &join.constraint {
                Some(JoinConstraint::On(e)) => self.expr(e, &Aliases::new()),
                Some(JoinConstraint::Using(cols)) => {
                    for c in cols {
                        self.add(&c.value, EntityType::Column);
                    }
                }
                None => {}
            }
        }
    }

    fn table_factor(&mut self, tf: &TableFactor) {
        match tf {
            TableFactor::Table { name, .. } => {
                if let Some(table) = name.last() {
                    self.add(&table.value, EntityType::Table);
                }
            }
            TableFactor::Derived { subquery, .. } => self.query(subquery),
            TableFactor::Nested(inner) => self.table_with_joins(inner),
        }
    }

    /// `aliases` holds select-list aliases visible in this clause; bare
    /// column references to them are not entities.
    fn expr(&mut self, e: &Expr, aliases: &Aliases) {
        match e {
            Expr::Column { qualifier, name } => {
                if qualifier.is_none() && aliases.contains(&name.value.to_lowercase()) {
                    return;
                }
                self.add(&name.value, EntityType::Column);
            }
            Expr::Literal(lit) => match lit {
                Literal::Number(n) => self.add(n, EntityType::Value),
                Literal::String { value, .. } => self.add(value, EntityType::Value),
                Literal::Boolean(b) => self.add(if *b { "TRUE" } else { "FALSE" }, EntityType::Value),
                Literal::Null => {}
            },
            Expr::Function(f) => {
                for a in &f.args {
                    self.expr(a, aliases);
                }
                if let Some(w) = &f.over {
                    for p in &w.partition_by {
                        self.expr(p, aliases);
                    }
                    for o in &w.order_by {
                        self.expr(&o.expr, aliases);
                    }
                }
            }
            Expr::Keyword(_) => {}
            Expr::Binary { left, right, .. } => {
                self.expr(left, aliases);
                self.expr(right, aliases);
            }
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) | Expr::Cast { expr, .. } => {
                self.expr(expr, aliases)
            }
            Expr::InList { expr, list, .. } => {
                self.expr(expr, aliases);
                for item in list {
                    self.expr(item, aliases);
                }
            }
            Expr::InSubquery { expr, subquery, .. } => {
                self.expr(expr, aliases);
                self.query(subquery);
            }
            Expr::Between { expr, low, high, .. } => {
                self.expr(expr, aliases);
                self.expr(low, aliases);
                self.expr(high, aliases);
            }
            Expr::Like { expr, pattern, escape, .. } => {
                self.expr(expr, aliases);
                self.expr(pattern, aliases);
                if let Some(esc) = escape {
                    self.expr(esc, aliases);
                }
            }
            Expr::Exists { subquery, .. } | Expr::Subquery(subquery) => self.query(subquery),
            Expr::Case { operand, whens, else_result } => {
                if let Some(op) = operand {
                    self.expr(op, aliases);
                }
                for (cond, res) in whens {
                    self.expr(cond, aliases);
                    self.expr(res, aliases);
                }
                if let Some(e) = else_result {
                    self.expr(e, aliases);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ents(sql: &str) -> Vec<String> {
        entities_from_sql(sql).unwrap().iter().map(|e| e.to_string()).collect()
    }

    #[test]
    fn movies_query() {
        assert_eq!(
            ents("SELECT title FROM movies WHERE year = 1945 ORDER BY pop"),
            ["title:C", "movies:T", "year:C", "1945:V", "pop:C"]
        );
    }

    #[test]
    fn star_excluded() {
        assert_eq!(ents("SELECT * FROM t"), ["t:T"]);
        assert_eq!(ents("SELECT count(*) FROM t"), ["t:T"]);
        assert_eq!(ents("SELECT T1.* FROM t AS T1"), ["t:T"]);
    }

    #[test]
    fn alias_and_qualifier_stripped() {
        assert_eq!(ents("SELECT a.name FROM artists AS a WHERE a.name LIKE 'Bob%'"), ["name:C", "artists:T", "Bob%:V"]);
        assert_eq!(
            ents("SELECT a.name FROM artists AS a JOIN albums ON a.id = albums.artist_id"),
            ["name:C", "artists:T", "albums:T", "id:C", "artist_id:C"]
        );
    }

    #[test]
    fn column_alias_excluded() {
        assert_eq!(
            ents("SELECT count(*) AS n, dept FROM emp GROUP BY dept HAVING n > 2 ORDER BY n DESC LIMIT 3"),
            ["dept:C", "emp:T", "2:V", "3:V"]
        );
    }

    #[test]
    fn literals_null_booleans_and_dedup() {
        assert_eq!(
            ents("SELECT x FROM t WHERE x = 'a' OR x = 'a' OR y IS NULL OR z = TRUE OR w = -3"),
            ["x:C", "t:T", "a:V", "y:C", "z:C", "TRUE:V", "w:C", "-3:V"]
        );
    }

    #[test]
    fn double_quoted_values_in_comparisons() {
        assert_eq!(
            ents("SELECT \"name\" FROM singer WHERE country = \"France\" AND age BETWEEN 20 AND 30"),
            ["name:C", "singer:T", "country:C", "France:V", "age:C", "20:V", "30:V"]
        );
    }

    #[test]
    fn subqueries_and_set_ops() {
        assert_eq!(
            ents(
                "SELECT name FROM s WHERE id IN (SELECT sid FROM c WHERE y = 2020) \
                 UNION SELECT name FROM t EXCEPT SELECT name FROM (SELECT name FROM u) AS d"
            ),
            ["name:C", "s:T", "id:C", "sid:C", "c:T", "y:C", "2020:V", "t:T", "u:T"]
        );
    }

    #[test]
    fn functions_case_cast() {
        assert_eq!(
            ents(
                "SELECT CAST(SUM(IIF(gender = 'M', 1, 0)) AS REAL) * 100 / COUNT(id), \
                 CASE WHEN score > 5 THEN 'hi' ELSE 'lo' END FROM players"
            ),
            ["gender:C", "M:V", "1:V", "0:V", "100:V", "id:C", "score:C", "5:V", "hi:V", "lo:V", "players:T"]
        );
    }

    #[test]
    fn backticked_bird_style() {
        assert_eq!(
            ents("SELECT `Free Meal Count (K-12)` FROM frpm WHERE `County Name` = 'Alameda'"),
            ["Free Meal Count (K-12):C", "frpm:T", "County Name:C", "Alameda:V"]
        );
    }
}
