use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imagecore::Kernel;

/// A PSF read from text, normalized to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedPsf {
    pub kernel: Kernel,
    pub rows: usize,
    pub cols: usize,
    /// Tap sum before normalization.
    pub raw_sum: f64,
}

impl LoadedPsf {
    /// True when the file was noticeably off unit sum.
    pub fn was_unnormalized(&self) -> bool {
        (self.raw_sum - 1.0).abs() > 1e-6
    }
}

/// Parses `"rows cols"` followed by `rows·cols` row-major values.
pub fn parse_psf(text: &str) -> Result<LoadedPsf> {
    let mut tokens = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::format("psf", format!("missing {name}")))?;
        tok.parse::<usize>()
            .map_err(|_| Error::format("psf", format!("bad {name} '{tok}'")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    if rows == 0 || cols == 0 {
        return Err(Error::format("psf", "empty grid"));
    }
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format("psf", format!("bad value '{t}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != rows * cols {
        return Err(Error::format(
            "psf",
            format!("expected {} values, found {}", rows * cols, values.len()),
        ));
    }
    let raw_sum: f64 = values.iter().sum();
    if raw_sum.abs() < 1e-300 {
        return Err(Error::format("psf", "taps sum to zero"));
    }
    let kernel = Kernel::from_grid(rows, cols, &values)?.normalized()?;
    Ok(LoadedPsf {
        kernel,
        rows,
        cols,
        raw_sum,
    })
}

pub fn load_psf(path: impl AsRef<Path>) -> Result<LoadedPsf> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_psf(&text)
}

/// Text form accepted by [`parse_psf`].
pub fn format_psf(k: &Kernel) -> String {
    let r = k.size();
    let mut s = format!("{r} {r}\n");
    for row in k.taps().chunks_exact(r) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
