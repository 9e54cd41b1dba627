//! Command results and their CSV / JSON rendering. Floats always carry 17
//! significant digits so outputs diff exactly between runs.

use ratchet_core::grid::fmt17;

#[derive(Debug, Clone, PartialEq)]
pub enum Out {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Out>),
    Obj(Vec<(String, Out)>),
}

impl From<f64> for Out {
    fn from(v: f64) -> Self {
        Out::Num(v)
    }
}

impl From<usize> for Out {
    fn from(v: usize) -> Self {
        Out::Int(v as i64)
    }
}

impl From<bool> for Out {
    fn from(v: bool) -> Self {
        Out::Bool(v)
    }
}

impl From<&str> for Out {
    fn from(v: &str) -> Self {
        Out::Str(v.to_string())
    }
}

impl From<String> for Out {
    fn from(v: String) -> Self {
        Out::Str(v)
    }
}

impl<T: Into<Out>> From<Option<T>> for Out {
    fn from(v: Option<T>) -> Self {
        v.map_or(Out::Null, Into::into)
    }
}

impl Out {
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        self.write_json(&mut s);
        s
    }

    fn write_json(&self, s: &mut String) {
        match self {
            Out::Null => s.push_str("null"),
            Out::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
            Out::Int(i) => s.push_str(&i.to_string()),
            Out::Num(x) if x.is_finite() => s.push_str(&fmt17(x + 0.0)),
            Out::Num(_) => s.push_str("null"),
            Out::Str(t) => s.push_str(&serde_json::to_string(t).unwrap_or_else(|_| "\"\"".into())),
            Out::Arr(items) => {
                s.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    v.write_json(s);
                }
                s.push(']');
            }
            Out::Obj(fields) => {
                s.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    s.push_str(&serde_json::to_string(k).unwrap_or_default());
                    s.push(':');
                    v.write_json(s);
                }
                s.push('}');
            }
        }
    }

    /// One CSV cell; strings are quoted when they need it.
    pub fn to_cell(&self) -> String {
        match self {
            Out::Null => String::new(),
            Out::Bool(b) => b.to_string(),
            Out::Int(i) => i.to_string(),
            Out::Num(x) => fmt17(x + 0.0),
            Out::Str(t) => csv_quote(t),
            Out::Arr(_) | Out::Obj(_) => csv_quote(&self.to_json()),
        }
    }
}

pub fn csv_quote(t: &str) -> String {
    if t.contains([',', '"', '\n']) {
        format!("\"{}\"", t.replace('"', "\"\""))
    } else {
        t.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Out>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Out>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(Out::to_cell).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    fn to_out(&self) -> Out {
        Out::Arr(self.rows.iter().map(|r| Out::Obj(self.header.iter().cloned().zip(r.iter().cloned()).collect())).collect())
    }
}

/// Scalar summary plus an optional table of rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub scalars: Vec<(String, Out)>,
    pub table: Option<Table>,
}

impl Report {
    pub fn scalar(mut self, key: &str, v: impl Into<Out>) -> Self {
        self.scalars.push((key.to_string(), v.into()));
        self
    }

    pub fn with_table(mut self, t: Table) -> Self {
        self.table = Some(t);
        self
    }

    pub fn to_json(&self) -> String {
        let mut fields = self.scalars.clone();
        if let Some(t) = &self.table {
            fields.push(("rows".into(), t.to_out()));
        }
        let mut s = Out::Obj(fields).to_json();
        s.push('\n');
        s
    }

    /// The table if there is one, else the scalars as a one-row table.
    pub fn to_csv(&self) -> String {
        match &self.table {
            Some(t) => t.to_csv(),
            None => Table { header: self.scalars.iter().map(|(k, _)| k.clone()).collect(), rows: vec![self.scalars.iter().map(|(_, v)| v.clone()).collect()] }
                .to_csv(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv_rendering() {
        let r = Report::default().scalar("a", 1.5).scalar("name", "x, y").scalar("none", Option::<f64>::None).scalar("n", 3usize);
        assert_eq!(r.to_json(), "{\"a\":1.5000000000000000e0,\"name\":\"x, y\",\"none\":null,\"n\":3}\n");
        assert_eq!(r.to_csv(), "a,name,none,n\n1.5000000000000000e0,\"x, y\",,3\n");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["a"], 1.5);
        assert_eq!(Out::Num(f64::NAN).to_json(), "null");
        assert_eq!(Out::Num(-0.0).to_cell(), Out::Num(0.0).to_cell());
    }
}
