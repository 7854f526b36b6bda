//! Dataset CSV: header `d_1,..,d_nd,y`, one sample per row.

use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::io::{parse_field, write_atomic};

impl Dataset {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("d_{i}")).collect();
        header.push("y".into());
        wr.write_record(&header).map_err(csv_err)?;
        for (d, y) in self.inputs().iter().zip(self.outputs()) {
            let mut row: Vec<String> = d.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(|e| format_err(origin, e))?.clone();
        let nd = header
            .len()
            .checked_sub(1)
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Format {
                path: origin.into(),
                message: "dataset CSV needs at least one input column and a y column".into(),
            })?;
        for (i, name) in header.iter().enumerate() {
            let expected = if i < nd {
                format!("d_{}", i + 1)
            } else {
                "y".into()
            };
            if name.trim() != expected {
                return Err(Error::Format {
                    path: origin.into(),
                    message: format!("header column {} is '{name}', expected '{expected}'", i + 1),
                });
            }
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| format_err(origin, e))?;
            let mut d = Vec::with_capacity(nd);
            for (c, name) in header.iter().enumerate().take(nd) {
                d.push(parse_field(origin, row + 1, name, rec.get(c))?);
            }
            outputs.push(parse_field(origin, row + 1, "y", rec.get(nd))?);
            inputs.push(d);
        }
        Dataset::new(inputs, outputs).map_err(|e| Error::Format {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(path, &buf)
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(f, path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::numerical(format!("csv encoding: {e}"))
}

fn format_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.into(),
        message: e.to_string(),
    }
}
