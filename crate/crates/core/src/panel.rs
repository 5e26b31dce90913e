//! The aligned regression dataset: named hourly columns on one grid plus
//! the estimation mask, with a CSV form for audit and re-load.

use std::io::{Read, Write};

use thiserror::Error;

use crate::series::{Grid, HourlySeries, PointFlag, SeriesError, TimePoint};

/// Column holding the hourly price used for plot output; kept beside the
/// regression columns rather than among them.
pub const PRICE_COLUMN: &str = "price_usd";

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("column `{0}` appears twice")]
    DuplicateColumn(String),
    #[error("column `{name}` is not on the panel grid")]
    GridMismatch { name: String },
    #[error("mask has length {mask}, grid has {grid}")]
    MaskLength { mask: usize, grid: usize },
    #[error("mask admits hour {0} where a column is missing")]
    MaskAdmitsMissing(usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("panel csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("panel csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPanel {
    grid: Grid,
    price: Option<HourlySeries>,
    columns: Vec<HourlySeries>,
    mask: Vec<bool>,
}

fn check_columns(
    grid: Grid,
    price: Option<&HourlySeries>,
    columns: &[HourlySeries],
) -> Result<(), PanelError> {
    for (i, c) in columns.iter().enumerate() {
        if columns[..i].iter().any(|o| o.name() == c.name()) {
            return Err(PanelError::DuplicateColumn(c.name().to_string()));
        }
    }
    for c in columns.iter().chain(price) {
        if c.grid() != grid {
            return Err(PanelError::GridMismatch {
                name: c.name().to_string(),
            });
        }
    }
    Ok(())
}

impl HourlyPanel {
    /// Assemble a panel whose mask admits hour `t` only when every column is
    /// present at `t` and at each of the `max_lag` preceding hours.
    pub fn assemble(
        grid: Grid,
        price: Option<HourlySeries>,
        columns: Vec<HourlySeries>,
        max_lag: usize,
    ) -> Result<Self, PanelError> {
        check_columns(grid, price.as_ref(), &columns)?;
        let present: Vec<bool> = (0..grid.len())
            .map(|t| columns.iter().all(|c| !c.flags()[t].is_missing()))
            .collect();
        let mask = (0..grid.len())
            .map(|t| t >= max_lag && (t - max_lag..=t).all(|s| present[s]))
            .collect();
        Self::from_parts(grid, price, columns, mask)
    }

    pub fn from_parts(
        grid: Grid,
        price: Option<HourlySeries>,
        columns: Vec<HourlySeries>,
        mask: Vec<bool>,
    ) -> Result<Self, PanelError> {
        check_columns(grid, price.as_ref(), &columns)?;
        if mask.len() != grid.len() {
            return Err(PanelError::MaskLength {
                mask: mask.len(),
                grid: grid.len(),
            });
        }
        for (t, &m) in mask.iter().enumerate() {
            if m && columns.iter().any(|c| c.flags()[t].is_missing()) {
                return Err(PanelError::MaskAdmitsMissing(t));
            }
        }
        Ok(Self {
            grid,
            price,
            columns,
            mask,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn price(&self) -> Option<&HourlySeries> {
        self.price.as_ref()
    }

    pub fn columns(&self) -> &[HourlySeries] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&HourlySeries, PanelError> {
        self.columns
            .iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| PanelError::UnknownColumn(name.to_string()))
    }

    pub fn estimation_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Serialize as `hour_ts,[price_usd,]<column>...,mask`. Missing values
    /// are written as empty fields; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PanelError> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header = vec!["hour_ts".to_string()];
        header.extend(self.price.iter().map(|p| p.name().to_string()));
        header.extend(self.columns.iter().map(|c| c.name().to_string()));
        header.push("mask".into());
        w.write_record(&header)?;
        let cols: Vec<&HourlySeries> = self.price.iter().chain(self.columns.iter()).collect();
        for t in 0..self.grid.len() {
            let mut row = Vec::with_capacity(header.len());
            row.push(self.grid.hour(t).to_string());
            for c in &cols {
                row.push(c.value(t).map(|v| v.to_string()).unwrap_or_default());
            }
            row.push(if self.mask[t] { "1" } else { "0" }.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Re-load a panel written by [`HourlyPanel::write_csv`]. Point
    /// provenance collapses to observed/missing.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, PanelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "hour_ts" || header[header.len() - 1] != "mask" {
            return Err(PanelError::Parse {
                line: 1,
                reason: "header must be hour_ts,<column>...,mask".into(),
            });
        }
        let names = &header[1..header.len() - 1];
        let mut hours = Vec::new();
        let mut data: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        let mut mask = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |reason: String| PanelError::Parse { line, reason };
            if rec.len() != header.len() {
                return Err(bad(format!("expected {} fields", header.len())));
            }
            let ts: i64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| bad("bad hour_ts".into()))?;
            hours.push(ts);
            for (j, col) in data.iter_mut().enumerate() {
                let field = rec[j + 1].trim();
                col.push(if field.is_empty() {
                    None
                } else {
                    Some(
                        field
                            .parse()
                            .map_err(|_| bad(format!("bad value `{field}`")))?,
                    )
                });
            }
            mask.push(match rec[header.len() - 1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("bad mask `{other}`"))),
            });
        }
        let start = TimePoint::new(*hours.first().ok_or(PanelError::Parse {
            line: 2,
            reason: "no rows".into(),
        })?)?;
        let grid = Grid::new(start, hours.len())?;
        for (i, &h) in hours.iter().enumerate() {
            if grid.hour(i).epoch_seconds() != h {
                return Err(PanelError::Parse {
                    line: i + 2,
                    reason: "hours are not consecutive".into(),
                });
            }
        }
        let mut price = None;
        let mut columns = Vec::new();
        for (name, col) in names.iter().zip(data) {
            let flags = col
                .iter()
                .map(|v| {
                    if v.is_some() {
                        PointFlag::Observed
                    } else {
                        PointFlag::Missing
                    }
                })
                .collect();
            let values = col.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            let s = HourlySeries::new(name.clone(), start, values, flags)?;
            if name == PRICE_COLUMN {
                price = Some(s);
            } else {
                columns.push(s);
            }
        }
        Self::from_parts(grid, price, columns, mask)
    }
}
