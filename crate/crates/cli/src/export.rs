//! Grid export and import.
//!
//! Both formats serialize every floating-point number as a decimal with 17
//! significant digits, which pins the exact f64 value: export -> import ->
//! export reproduces identical bytes.

use anyhow::{bail, Context, Result};
use multigame_core::pde::{Gauge, GeneratingField};
use multigame_core::lattice::TimeLattice;
use multigame_core::values::ValueGrid;

/// 17-significant-digit decimal form of a double; round-trips bit-exactly
/// for finite values.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One exported cell: a float or a control-sample index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Index(u64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => fmt_f64(*x),
            Cell::Index(i) => i.to_string(),
        }
    }
}

/// A flat table representation of any exported grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    /// Grid kind tag, e.g. "lower", "upper", "field-upper".
    pub kind: String,
    /// Gauge tag; "none" for value grids.
    pub gauge: String,
    /// Axis names in column order, e.g. ["t1", "t2", "x1"].
    pub axes: Vec<String>,
    /// Per-axis grid spacing.
    pub spacing: Vec<f64>,
    /// Value column names following the axis columns.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl GridTable {
    pub fn from_value_grid(vg: &ValueGrid, lat: &TimeLattice) -> Self {
        let m = lat.dim();
        let sgrid = vg.state_grid();
        let n = sgrid.dim();
        let mut axes: Vec<String> = (1..=m).map(|a| format!("t{a}")).collect();
        axes.extend((1..=n).map(|i| format!("x{i}")));
        let mut spacing = lat.spacing().to_vec();
        spacing.extend_from_slice(sgrid.spacing());
        let ns = sgrid.node_count();
        let mut rows = Vec::with_capacity(vg.lat_node_count() * ns);
        for lat_idx in 0..vg.lat_node_count() {
            let t = lat.node_coords(&lat.node_multi(lat_idx));
            for s in 0..ns {
                let x = sgrid.node_coords(s);
                let mut row: Vec<Cell> = t.iter().chain(&x).map(|&c| Cell::Float(c)).collect();
                row.push(Cell::Float(vg.value(lat_idx, s)));
                let (u, v) = vg.control_pair(lat_idx, s);
                row.push(Cell::Index(u as u64));
                row.push(Cell::Index(v as u64));
                rows.push(row);
            }
        }
        GridTable {
            kind: vg.kind().label().to_string(),
            gauge: "none".to_string(),
            axes,
            spacing,
            columns: vec!["value".into(), "u_index".into(), "v_index".into()],
            rows,
        }
    }

    pub fn from_field(field: &GeneratingField, lat: &TimeLattice, kind: &str) -> Self {
        let m = lat.dim();
        let sgrid = field.state_grid();
        let n = sgrid.dim();
        let mut axes: Vec<String> = (1..=m).map(|a| format!("t{a}")).collect();
        axes.extend((1..=n).map(|i| format!("x{i}")));
        let mut spacing = lat.spacing().to_vec();
        spacing.extend_from_slice(sgrid.spacing());
        let ns = sgrid.node_count();
        let gauge = match field.gauge() {
            Gauge::EqualComponents => "equal-components",
            Gauge::OffsetComponents => "offset-components",
        };
        let mut rows = Vec::with_capacity(lat.node_count() * ns);
        for lat_idx in 0..lat.node_count() {
            let t = lat.node_coords(&lat.node_multi(lat_idx));
            for s in 0..ns {
                let x = sgrid.node_coords(s);
                let mut row: Vec<Cell> = t.iter().chain(&x).map(|&c| Cell::Float(c)).collect();
                for alpha in 0..field.m() {
                    row.push(Cell::Float(field.component(alpha, lat_idx, s)));
                }
                rows.push(row);
            }
        }
        GridTable {
            kind: kind.to_string(),
            gauge: gauge.to_string(),
            axes,
            spacing,
            columns: (1..=field.m()).map(|a| format!("M{a}")).collect(),
            rows,
        }
    }

    // -- CSV ----------------------------------------------------------------

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# axes: {}; spacing: {}; gauge: {}; kind: {}\n",
            self.axes.join(","),
            self.spacing.iter().map(|&s| fmt_f64(s)).collect::<Vec<_>>().join(","),
            self.gauge,
            self.kind
        ));
        out.push_str(&self.axes.join(","));
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                out.push_str(&cell.render());
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().context("empty grid file")?;
        let header = header.strip_prefix("# ").context("missing comment header")?;
        let mut kind = String::new();
        let mut gauge = String::new();
        let mut axes = Vec::new();
        let mut spacing = Vec::new();
        for part in header.split("; ") {
            let (key, value) = part.split_once(": ").context("malformed header entry")?;
            match key {
                "axes" => axes = value.split(',').map(|s| s.to_string()).collect(),
                "spacing" => {
                    spacing = value
                        .split(',')
                        .map(|s| s.parse::<f64>().context("bad spacing"))
                        .collect::<Result<_>>()?
                }
                "gauge" => gauge = value.to_string(),
                "kind" => kind = value.to_string(),
                other => bail!("unknown header key `{other}`"),
            }
        }
        let names = lines.next().context("missing column header")?;
        let all_names: Vec<&str> = names.split(',').collect();
        if all_names.len() < axes.len() {
            bail!("column header shorter than the axis list");
        }
        let columns: Vec<String> = all_names[axes.len()..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for (idx, tok) in line.split(',').enumerate() {
                let is_index = idx >= axes.len()
                    && columns
                        .get(idx - axes.len())
                        .map(|c| c.ends_with("_index"))
                        .unwrap_or(false);
                if is_index {
                    row.push(Cell::Index(tok.parse::<u64>().context("bad index cell")?));
                } else {
                    row.push(Cell::Float(tok.parse::<f64>().context("bad float cell")?));
                }
            }
            rows.push(row);
        }
        Ok(GridTable { kind, gauge, axes, spacing, columns, rows })
    }

    // -- JSON ---------------------------------------------------------------

    /// Hand-written JSON so the numbers keep the 17-significant-digit
    /// decimal form; the document stays valid JSON.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  \"kind\": \"{}\",\n", self.kind));
        out.push_str(&format!("  \"gauge\": \"{}\",\n", self.gauge));
        out.push_str(&format!(
            "  \"axes\": [{}],\n",
            self.axes.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(", ")
        ));
        out.push_str(&format!(
            "  \"spacing\": [{}],\n",
            self.spacing.iter().map(|&s| fmt_f64(s)).collect::<Vec<_>>().join(", ")
        ));
        out.push_str(&format!(
            "  \"columns\": [{}],\n",
            self.columns.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ")
        ));
        out.push_str(&format!("  \"shape\": [{}, {}],\n", self.rows.len(), self.axes.len() + self.columns.len()));
        out.push_str("  \"rows\": [\n");
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
            out.push_str(&format!(
                "    [{}]{}\n",
                cells.join(", "),
                if i + 1 < self.rows.len() { "," } else { "" }
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let str_of = |v: &serde_json::Value, what: &str| -> Result<String> {
            Ok(v.as_str().with_context(|| format!("{what} must be a string"))?.to_string())
        };
        let kind = str_of(&doc["kind"], "kind")?;
        let gauge = str_of(&doc["gauge"], "gauge")?;
        let axes: Vec<String> = doc["axes"]
            .as_array()
            .context("axes must be an array")?
            .iter()
            .map(|v| str_of(v, "axis"))
            .collect::<Result<_>>()?;
        let spacing: Vec<f64> = doc["spacing"]
            .as_array()
            .context("spacing must be an array")?
            .iter()
            .map(|v| v.as_f64().context("spacing entry"))
            .collect::<Result<_>>()?;
        let columns: Vec<String> = doc["columns"]
            .as_array()
            .context("columns must be an array")?
            .iter()
            .map(|v| str_of(v, "column"))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for row in doc["rows"].as_array().context("rows must be an array")? {
            let row = row.as_array().context("row must be an array")?;
            let mut cells = Vec::with_capacity(row.len());
            for (idx, v) in row.iter().enumerate() {
                let is_index = idx >= axes.len()
                    && columns
                        .get(idx - axes.len())
                        .map(|c| c.ends_with("_index"))
                        .unwrap_or(false);
                if is_index {
                    cells.push(Cell::Index(v.as_u64().context("index cell")?));
                } else {
                    cells.push(Cell::Float(v.as_f64().context("float cell")?));
                }
            }
            rows.push(cells);
        }
        Ok(GridTable { kind, gauge, axes, spacing, columns, rows })
    }

    // -- Plot slices ---------------------------------------------------------

    /// Gnuplot-compatible table of the slice fixing the named axes to
    /// specific grid values; at most two axes may remain free.
    pub fn plotdata(&self, fixed: &[(String, f64)]) -> Result<String> {
        for (name, _) in fixed {
            if !self.axes.contains(name) {
                bail!("unknown axis `{name}`");
            }
        }
        let free: Vec<usize> = (0..self.axes.len())
            .filter(|&i| !fixed.iter().any(|(n, _)| n == &self.axes[i]))
            .collect();
        if free.len() > 2 {
            bail!(
                "bad slice: {} axes remain free ({}), at most 2 allowed",
                free.len(),
                free.iter().map(|&i| self.axes[i].as_str()).collect::<Vec<_>>().join(",")
            );
        }
        let tol = 1e-12;
        let mut out = String::new();
        out.push_str(&format!(
            "# slice of {}: columns {} then {}\n",
            self.kind,
            free.iter().map(|&i| self.axes[i].as_str()).collect::<Vec<_>>().join(" "),
            self.columns.join(" ")
        ));
        let mut last_outer: Option<f64> = None;
        for row in &self.rows {
            let keep = fixed.iter().all(|(name, val)| {
                let i = self.axes.iter().position(|a| a == name).unwrap();
                match row[i] {
                    Cell::Float(x) => (x - val).abs() <= tol,
                    Cell::Index(_) => false,
                }
            });
            if !keep {
                continue;
            }
            if free.len() == 2 {
                if let Cell::Float(outer) = row[free[0]] {
                    if let Some(prev) = last_outer {
                        if (outer - prev).abs() > tol {
                            out.push('\n');
                        }
                    }
                    last_outer = Some(outer);
                }
            }
            let mut fields: Vec<String> = free
                .iter()
                .map(|&i| row[i].render())
                .collect();
            for cell in &row[self.axes.len()..] {
                fields.push(cell.render());
            }
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        Ok(out)
    }
}
