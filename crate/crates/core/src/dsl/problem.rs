use std::collections::HashMap;
use std::fmt;

use super::expr::{ExprParser, Expression};
use super::lexer::{tokenize, Pos, Tok, Token};
use super::{DslError, ErrorKind, EvalError};
use crate::geometry::{Axis, Boundary, CoordinateChart, GeometryError, MetricSource};

const RESERVED: [&str; 12] =
    ["t", "pi", "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "dirichlet", "periodic", "symmetry"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Symmetry {
    #[default]
    None,
    Symmetric,
    Antisymmetric,
}

impl Symmetry {
    pub fn keyword(self) -> &'static str {
        match self {
            Symmetry::None => "none",
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        [Symmetry::None, Symmetry::Symmetric, Symmetry::Antisymmetric]
            .into_iter()
            .find(|k| k.keyword() == s)
    }
}

/// A validated problem description.
///
/// Expressions read the coordinates in declaration order followed by `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    chart: CoordinateChart,
    metric: Vec<Expression>,
    gauge: Vec<Expression>,
    potential: Expression,
    mass: f64,
    hbar: f64,
    symmetry: Symmetry,
    time_dependent: bool,
}

impl ProblemSpec {
    /// Assembles a spec from parts. `metric` is row-major `N x N`.
    pub fn from_parts(
        chart: CoordinateChart,
        metric: Vec<Expression>,
        gauge: Vec<Expression>,
        potential: Expression,
        mass: f64,
        hbar: f64,
        symmetry: Symmetry,
    ) -> Result<Self, DslError> {
        let n = chart.dim();
        let bad = |m: String| DslError::unplaced(ErrorKind::InvalidValue(m));
        if metric.len() != n * n {
            return Err(bad(format!("expected {} metric entries", n * n)));
        }
        if gauge.len() != n {
            return Err(bad(format!("expected {n} gauge components")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(bad("mass must be positive".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(bad("hbar must be positive".into()));
        }
        if metric.iter().any(|e| e.uses(n)) {
            return Err(bad("the metric may not depend on t".into()));
        }
        let mut spec = Self {
            chart,
            metric,
            gauge,
            potential,
            mass,
            hbar,
            symmetry,
            time_dependent: false,
        };
        spec.time_dependent = spec.gauge.iter().chain([&spec.potential]).any(|e| e.uses(n));
        for p in 0..n {
            for q in p + 1..n {
                if !spec.entries_agree(p, q) {
                    return Err(DslError::unplaced(ErrorKind::AsymmetricMetric { p: p + 1, q: q + 1 }));
                }
            }
        }
        Ok(spec)
    }

    fn entries_agree(&self, p: usize, q: usize) -> bool {
        let n = self.dim();
        let (a, b) = (&self.metric[p * n + q], &self.metric[q * n + p]);
        if a == b || a.to_string() == b.to_string() {
            return true;
        }
        let mut vars = vec![0.0; n + 1];
        for i in 0..self.chart.len() {
            self.chart.point_into(i, &mut vars[..n]);
            match (a.eval(&vars), b.eval(&vars)) {
                (Ok(x), Ok(y)) if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300) => {}
                _ => return false,
            }
        }
        true
    }

    pub fn chart(&self) -> &CoordinateChart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Expression for `g_pq` (zero-based indices).
    pub fn metric_expr(&self, p: usize, q: usize) -> &Expression {
        &self.metric[p * self.dim() + q]
    }

    /// Expression for the covariant gauge component `u_p`.
    pub fn gauge_expr(&self, p: usize) -> &Expression {
        &self.gauge[p]
    }

    pub fn potential_expr(&self) -> &Expression {
        &self.potential
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn has_gauge(&self) -> bool {
        self.gauge.iter().any(|e| !e.is_zero())
    }

    /// True if the gauge field reads `t`.
    pub fn gauge_time_dependent(&self) -> bool {
        let n = self.dim();
        self.gauge.iter().any(|e| e.uses(n))
    }

    /// Names bound in expressions: the coordinates, then `t`.
    pub fn variables(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.chart.axes().iter().map(|a| a.name.as_str()).collect();
        v.push("t");
        v
    }

    fn vars_at(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut v = x.to_vec();
        v.push(t);
        v
    }

    pub fn potential_at(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        self.potential.eval(&self.vars_at(x, t))
    }

    /// Covariant gauge components at a point.
    pub fn gauge_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>, EvalError> {
        let v = self.vars_at(x, t);
        self.gauge.iter().map(|e| e.eval(&v)).collect()
    }

    /// Evaluates an expression at every sample point.
    pub fn sample(&self, e: &Expression, t: f64) -> Result<Vec<f64>, EvalError> {
        let n = self.dim();
        let mut v = vec![0.0; n + 1];
        v[n] = t;
        (0..self.chart.len())
            .map(|i| {
                self.chart.point_into(i, &mut v[..n]);
                e.eval(&v)
            })
            .collect()
    }

    pub fn sample_potential(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        self.sample(&self.potential, t)
    }

    /// Covariant gauge components over the grid, one field per axis.
    pub fn sample_gauge(&self, t: f64) -> Result<Vec<Vec<f64>>, EvalError> {
        self.gauge
            .iter()
            .map(|e| if e.is_zero() { Ok(vec![0.0; self.chart.len()]) } else { self.sample(e, t) })
            .collect()
    }

    /// The same problem on a different grid.
    pub fn with_points(&self, points: &[usize]) -> Result<Self, DslError> {
        if points.len() != self.dim() {
            let msg = format!("{} grid sizes for {} coordinates", points.len(), self.dim());
            return Err(DslError::unplaced(ErrorKind::InvalidValue(msg)));
        }
        let axes = self
            .chart
            .axes()
            .iter()
            .zip(points)
            .map(|(a, &n)| Axis { points: n, ..a.clone() })
            .collect();
        let chart = CoordinateChart::new(axes).map_err(|e| DslError::unplaced(ErrorKind::Chart(e)))?;
        Ok(Self { chart, ..self.clone() })
    }

    pub fn with_potential(&self, potential: Expression) -> Self {
        let mut s = Self { potential, ..self.clone() };
        let n = s.dim();
        s.time_dependent = s.gauge.iter().chain([&s.potential]).any(|e| e.uses(n));
        s
    }

    pub fn with_gauge(&self, gauge: Vec<Expression>) -> Self {
        assert_eq!(gauge.len(), self.dim());
        let mut s = Self { gauge, ..self.clone() };
        let n = s.dim();
        s.time_dependent = s.gauge.iter().chain([&s.potential]).any(|e| e.uses(n));
        s
    }

    pub fn with_hbar(&self, hbar: f64) -> Self {
        assert!(hbar > 0.0);
        Self { hbar, ..self.clone() }
    }

    /// Parses an expression in this problem's variable scope.
    pub fn expression(&self, text: &str) -> Result<Expression, DslError> {
        Expression::parse(text, &self.variables())
    }
}

impl MetricSource for ProblemSpec {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn metric_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        let v = self.vars_at(x, 0.0);
        for (o, e) in out.iter_mut().zip(&self.metric) {
            *o = e.eval(&v).map_err(|err| GeometryError::Evaluation(err.to_string()))?;
        }
        Ok(())
    }
}

impl fmt::Display for ProblemSpec {
    /// Canonical problem-file text; parsing it yields an equal spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.dim();
        writeln!(f, "coordinates {{")?;
        for a in self.chart.axes() {
            writeln!(f, "  {}: ({:?}, {:?}) {}", a.name, a.lower, a.upper, a.boundary.keyword())?;
        }
        writeln!(f, "}}\ngrid {{")?;
        for a in self.chart.axes() {
            writeln!(f, "  {}: {}", a.name, a.points)?;
        }
        writeln!(f, "}}\nmetric {{")?;
        for p in 0..n {
            for q in 0..n {
                writeln!(f, "  g[{},{}] = {}", p + 1, q + 1, self.metric[p * n + q])?;
            }
        }
        writeln!(f, "}}\ngauge {{")?;
        for p in 0..n {
            writeln!(f, "  u[{}] = {}", p + 1, self.gauge[p])?;
        }
        writeln!(f, "}}\npotential {{\n  W = {}\n}}", self.potential)?;
        writeln!(f, "constants {{\n  mass = {:?}\n  hbar = {:?}\n}}", self.mass, self.hbar)?;
        writeln!(f, "symmetry {{ {} }}", self.symmetry.keyword())
    }
}

struct Cursor<'a> {
    toks: &'a [Token],
    at: usize,
    end: Pos,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], end: Pos) -> Self {
        Self { toks, at: 0, end }
    }

    fn done(&self) -> bool {
        self.at >= self.toks.len()
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.at)
    }

    fn pos(&self) -> Pos {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn syntax(&self, what: &str) -> DslError {
        let found = self.peek().map_or("end of section".to_string(), |t| t.tok.describe());
        DslError::new(ErrorKind::Syntax(format!("expected {what}, found {found}")), self.pos())
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        if self.peek().map(|t| &t.tok) == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.syntax(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(&'a str, Pos), DslError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), pos }) => {
                self.at += 1;
                Ok((s.as_str(), *pos))
            }
            _ => Err(self.syntax("an identifier")),
        }
    }

    fn integer(&mut self) -> Result<(i64, Pos), DslError> {
        match self.peek() {
            Some(Token { tok: Tok::Number(v), pos }) => {
                if v.fract() != 0.0 || *v > 1e15 {
                    return Err(DslError::new(ErrorKind::InvalidValue(format!("{v} is not an integer")), *pos));
                }
                self.at += 1;
                Ok((*v as i64, *pos))
            }
            _ => Err(self.syntax("an integer")),
        }
    }

    fn expression(&mut self, vars: &[&str]) -> Result<(Expression, Pos), DslError> {
        let pos = self.pos();
        let rest = &self.toks[self.at..];
        let mut p = ExprParser::new(rest, vars);
        let e = p.expression()?;
        self.at += p.position();
        Ok((e, pos))
    }

    /// A constant expression, evaluated.
    fn constant(&mut self) -> Result<(f64, Pos), DslError> {
        let (e, pos) = self.expression(&[])?;
        let v = e
            .eval(&[])
            .map_err(|err| DslError::new(ErrorKind::InvalidValue(err.to_string()), pos))?;
        Ok((v, pos))
    }
}

struct Section<'a> {
    pos: Pos,
    body: &'a [Token],
    close: Pos,
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, DslError> {
    let tokens = tokenize(text)?;
    let eof = tokens.last().map_or(Pos { line: 1, column: 1 }, |t| t.pos);
    let mut sections: HashMap<&str, Section> = HashMap::new();
    let mut top: Vec<(&str, Pos, &[Token])> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Token { tok: Tok::Ident(name), pos } = &tokens[i] else {
            return Err(DslError::new(
                ErrorKind::Syntax(format!("expected a section name, found {}", tokens[i].tok.describe())),
                tokens[i].pos,
            ));
        };
        match tokens.get(i + 1).map(|t| &t.tok) {
            Some(Tok::LBrace) => {
                let start = i + 2;
                let mut j = start;
                while j < tokens.len() && tokens[j].tok != Tok::RBrace {
                    if tokens[j].tok == Tok::LBrace {
                        return Err(DslError::new(ErrorKind::Syntax("nested `{`".into()), tokens[j].pos));
                    }
                    j += 1;
                }
                if j == tokens.len() {
                    return Err(DslError::new(ErrorKind::Syntax(format!("unclosed section `{name}`")), *pos));
                }
                if !matches!(
                    name.as_str(),
                    "coordinates" | "metric" | "gauge" | "potential" | "grid" | "constants" | "symmetry"
                ) {
                    return Err(DslError::new(ErrorKind::UnknownKey(name.clone()), *pos));
                }
                let sec = Section { pos: *pos, body: &tokens[start..j], close: tokens[j].pos };
                if sections.insert(name.as_str(), sec).is_some() {
                    return Err(DslError::new(ErrorKind::DuplicateEntry(name.clone()), *pos));
                }
                i = j + 1;
            }
            Some(Tok::Assign) => {
                // top-level `key = value`; the value runs until the next `ident =` or `ident {`
                let start = i + 2;
                let mut j = start;
                while j < tokens.len() {
                    let next_is_item = matches!(tokens[j].tok, Tok::Ident(_))
                        && matches!(tokens.get(j + 1).map(|t| &t.tok), Some(Tok::Assign | Tok::LBrace))
                        && j > start;
                    if next_is_item {
                        break;
                    }
                    j += 1;
                }
                top.push((name.as_str(), *pos, &tokens[start..j]));
                i = j;
            }
            _ => {
                let p = tokens.get(i + 1).map_or(*pos, |t| t.pos);
                return Err(DslError::new(ErrorKind::Syntax(format!("expected `{{` or `=` after `{name}`")), p));
            }
        }
    }

    let require = |name: &str| {
        sections
            .get(name)
            .ok_or_else(|| DslError::new(ErrorKind::MissingSection(name.into()), eof))
    };

    // coordinates
    let coords = require("coordinates")?;
    let mut axes: Vec<Axis> = Vec::new();
    let mut axis_pos: Vec<Pos> = Vec::new();
    let mut c = Cursor::new(coords.body, coords.close);
    while !c.done() {
        let (name, pos) = c.ident()?;
        if RESERVED.contains(&name) {
            return Err(DslError::new(ErrorKind::InvalidValue(format!("`{name}` is reserved")), pos));
        }
        if axes.iter().any(|a| a.name == name) {
            return Err(DslError::new(ErrorKind::DuplicateEntry(name.into()), pos));
        }
        c.expect(Tok::Colon)?;
        c.expect(Tok::LParen)?;
        let (lower, _) = c.constant()?;
        c.expect(Tok::Comma)?;
        let (upper, _) = c.constant()?;
        c.expect(Tok::RParen)?;
        let mut boundary = Boundary::Dirichlet;
        if let Some(Token { tok: Tok::Ident(k), .. }) = c.peek() {
            match k.as_str() {
                "dirichlet" => {
                    c.at += 1;
                }
                "periodic" => {
                    boundary = Boundary::Periodic;
                    c.at += 1;
                }
                _ => {}
            }
        }
        if lower >= upper {
            return Err(DslError::new(ErrorKind::Chart(crate::geometry::ChartError::EmptyRange(name.into())), pos));
        }
        axes.push(Axis { name: name.into(), lower, upper, boundary, points: 0 });
        axis_pos.push(pos);
    }
    if axes.is_empty() {
        return Err(DslError::new(ErrorKind::Chart(crate::geometry::ChartError::Empty), coords.pos));
    }
    let n = axes.len();

    // grid
    let grid = require("grid")?;
    let mut c = Cursor::new(grid.body, grid.close);
    let mut seen = vec![false; n];
    while !c.done() {
        let (name, pos) = c.ident()?;
        let Some(p) = axes.iter().position(|a| a.name == name) else {
            return Err(DslError::new(ErrorKind::UnknownIdentifier(name.into()), pos));
        };
        if seen[p] {
            return Err(DslError::new(ErrorKind::DuplicateEntry(name.into()), pos));
        }
        c.expect(Tok::Colon)?;
        let (v, vpos) = c.integer()?;
        if v < 3 {
            return Err(DslError::new(ErrorKind::Chart(crate::geometry::ChartError::TooFewPoints(name.into())), vpos));
        }
        axes[p].points = v as usize;
        seen[p] = true;
    }
    if let Some(p) = seen.iter().position(|s| !s) {
        return Err(DslError::new(ErrorKind::MissingGridEntry(axes[p].name.clone()), grid.pos));
    }
    let chart = CoordinateChart::new(axes).map_err(|e| DslError::new(ErrorKind::Chart(e), coords.pos))?;
    let mut vars: Vec<&str> = chart.axes().iter().map(|a| a.name.as_str()).collect();
    vars.push("t");

    // metric
    let msec = require("metric")?;
    let mut entries: Vec<Option<(Expression, Pos)>> = vec![None; n * n];
    let mut c = Cursor::new(msec.body, msec.close);
    while !c.done() {
        let (key, kpos) = c.ident()?;
        if key != "g" {
            return Err(DslError::new(ErrorKind::UnknownKey(key.into()), kpos));
        }
        c.expect(Tok::LBracket)?;
        let p = index(&mut c, n)?;
        c.expect(Tok::Comma)?;
        let q = index(&mut c, n)?;
        c.expect(Tok::RBracket)?;
        c.expect(Tok::Assign)?;
        let (e, epos) = c.expression(&vars)?;
        if e.uses(n) {
            return Err(DslError::new(ErrorKind::InvalidValue("the metric may not depend on t".into()), epos));
        }
        if entries[p * n + q].is_some() {
            return Err(DslError::new(ErrorKind::DuplicateEntry(format!("g[{},{}]", p + 1, q + 1)), kpos));
        }
        entries[p * n + q] = Some((e, kpos));
    }
    let mut metric = vec![Expression::constant(0.0); n * n];
    for p in 0..n {
        match &entries[p * n + p] {
            Some((e, _)) => metric[p * n + p] = e.clone(),
            None => {
                return Err(DslError::new(
                    ErrorKind::InvalidValue(format!("missing diagonal entry g[{0},{0}]", p + 1)),
                    msec.pos,
                ))
            }
        }
        for q in p + 1..n {
            match (&entries[p * n + q], &entries[q * n + p]) {
                (None, None) => {}
                (Some((a, _)), Some((b, _))) => {
                    metric[p * n + q] = a.clone();
                    metric[q * n + p] = b.clone();
                }
                (Some((_, pos)), None) | (None, Some((_, pos))) => {
                    return Err(DslError::new(ErrorKind::AsymmetricMetric { p: p + 1, q: q + 1 }, *pos));
                }
            }
        }
    }

    // gauge
    let mut gauge = vec![Expression::constant(0.0); n];
    if let Some(gsec) = sections.get("gauge") {
        let mut given = vec![false; n];
        let mut c = Cursor::new(gsec.body, gsec.close);
        while !c.done() {
            let (key, kpos) = c.ident()?;
            if key != "u" {
                return Err(DslError::new(ErrorKind::UnknownKey(key.into()), kpos));
            }
            c.expect(Tok::LBracket)?;
            let p = index(&mut c, n)?;
            c.expect(Tok::RBracket)?;
            c.expect(Tok::Assign)?;
            let (e, _) = c.expression(&vars)?;
            if given[p] {
                return Err(DslError::new(ErrorKind::DuplicateEntry(format!("u[{}]", p + 1)), kpos));
            }
            given[p] = true;
            gauge[p] = e;
        }
    }

    // potential
    let psec = require("potential")?;
    let mut c = Cursor::new(psec.body, psec.close);
    let mut potential = None;
    while !c.done() {
        let (key, kpos) = c.ident()?;
        if key != "W" {
            return Err(DslError::new(ErrorKind::UnknownKey(key.into()), kpos));
        }
        c.expect(Tok::Assign)?;
        let (e, _) = c.expression(&vars)?;
        if potential.replace(e).is_some() {
            return Err(DslError::new(ErrorKind::DuplicateEntry("W".into()), kpos));
        }
    }
    let Some(potential) = potential else {
        return Err(DslError::new(ErrorKind::InvalidValue("potential section has no `W`".into()), psec.pos));
    };

    // constants and symmetry, from sections and top-level assignments
    let mut constants: Vec<(&str, Pos, f64)> = Vec::new();
    if let Some(csec) = sections.get("constants") {
        let mut c = Cursor::new(csec.body, csec.close);
        while !c.done() {
            let (key, kpos) = c.ident()?;
            c.expect(Tok::Assign)?;
            let (v, vpos) = c.constant()?;
            constants.push(constant_entry(key, kpos, v, vpos)?);
        }
    }
    let mut symmetry = None;
    if let Some(ssec) = sections.get("symmetry") {
        let mut c = Cursor::new(ssec.body, ssec.close);
        let (k, kpos) = c.ident()?;
        symmetry = Some(symmetry_keyword(k, kpos)?);
        if !c.done() {
            return Err(c.syntax("`}`"));
        }
    }
    for (key, kpos, body) in &top {
        let mut c = Cursor::new(body, *kpos);
        match *key {
            "mass" | "hbar" => {
                let (v, vpos) = c.constant()?;
                constants.push(constant_entry(key, *kpos, v, vpos)?);
            }
            "symmetry" => {
                let (k, spos) = c.ident()?;
                if symmetry.is_some() {
                    return Err(DslError::new(ErrorKind::DuplicateEntry("symmetry".into()), *kpos));
                }
                symmetry = Some(symmetry_keyword(k, spos)?);
            }
            other => return Err(DslError::new(ErrorKind::UnknownKey(other.into()), *kpos)),
        }
        if !c.done() {
            return Err(c.syntax("end of assignment"));
        }
    }
    let (mut mass, mut hbar) = (None, None);
    for (key, kpos, v) in constants {
        let slot = if key == "mass" { &mut mass } else { &mut hbar };
        if slot.replace(v).is_some() {
            return Err(DslError::new(ErrorKind::DuplicateEntry(key.into()), kpos));
        }
    }
    let (mass, hbar) = (mass.unwrap_or(1.0), hbar.unwrap_or(1.0));

    let symmetry = symmetry.unwrap_or_default();
    ProblemSpec::from_parts(chart, metric, gauge, potential, mass, hbar, symmetry).map_err(|e| {
        // attach a position to validation failures
        let pos = match &e.kind {
            ErrorKind::AsymmetricMetric { p, q } => {
                entries[(p - 1) * n + (q - 1)].as_ref().map_or(msec.pos, |(_, pos)| *pos)
            }
            _ => eof,
        };
        DslError::new(e.kind, pos)
    })
}

fn index(c: &mut Cursor, n: usize) -> Result<usize, DslError> {
    let (v, pos) = c.integer()?;
    if v < 1 || v as usize > n {
        return Err(DslError::new(ErrorKind::IndexOutOfRange { index: v, dim: n }, pos));
    }
    Ok(v as usize - 1)
}

fn symmetry_keyword(k: &str, pos: Pos) -> Result<Symmetry, DslError> {
    Symmetry::from_keyword(k).ok_or_else(|| DslError::new(ErrorKind::UnknownKey(k.into()), pos))
}

fn constant_entry<'a>(key: &'a str, kpos: Pos, v: f64, vpos: Pos) -> Result<(&'a str, Pos, f64), DslError> {
    if key != "mass" && key != "hbar" {
        return Err(DslError::new(ErrorKind::UnknownKey(key.into()), kpos));
    }
    if !(v > 0.0) {
        return Err(DslError::new(ErrorKind::InvalidValue(format!("{key} must be positive")), vpos));
    }
    Ok((key, kpos, v))
}
