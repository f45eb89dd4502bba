//! The 7×11 electrode grid mapping channel names to image cells.
//!
//! The shipped table flattens a standard 64-channel 10-20 montage onto a
//! 7-row × 11-column raster: rows follow the front-to-back electrode lines
//! (Fp/AF, F, FT/FC, T/C, TP/CP, P, PO/O) and columns follow lateralization
//! (z on column 5, odd suffixes left, even right). It is a stand-in — the
//! montage-to-pixel table is not published anywhere authoritative — and any
//! alternative table can be loaded from a `channel,row,col` file.
//!
//! Empty cells are filled by copying the nearest occupied cell (Euclidean
//! distance on (row, col), ties broken by row-major order of the source).

use super::FeatureError;
use std::collections::HashMap;

pub const GRID_ROWS: usize = 7;
pub const GRID_COLS: usize = 11;
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLS;

const DEFAULT_TABLE: &str = include_str!("../../assets/grid_7x11.csv");

/// Canonical channel order (row-major over the shipped grid). Recordings and
/// spectra use this order for their first 64 rows.
pub const DEFAULT_CHANNEL_ORDER: [&str; 64] = [
    "AF7", "AF3", "Fp1", "Fp2", "AF4", "AF8", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6",
    "F8", "FT9", "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "FT10", "T7",
    "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8", "TP9", "TP7", "CP5", "CP3", "CP1", "CPz",
    "CP2", "CP4", "CP6", "TP8", "TP10", "P9", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6",
    "P8", "P10", "PO7", "PO3", "O1", "Oz", "O2", "PO4", "PO8",
];

/// Electrode-to-cell map plus the extrapolation table for empty cells.
#[derive(Debug, Clone)]
pub struct ElectrodeGrid {
    /// Channel names in input order.
    channels: Vec<String>,
    /// Cell per channel, aligned with `channels`.
    cells: Vec<(usize, usize)>,
    /// Cells with no electrode.
    empty_cells: Vec<(usize, usize)>,
    /// Empty cell → occupied source cell to copy from.
    fill_from: HashMap<(usize, usize), (usize, usize)>,
}

impl ElectrodeGrid {
    /// The shipped 64-channel table.
    pub fn default_table() -> ElectrodeGrid {
        Self::parse(DEFAULT_TABLE).expect("shipped grid table is valid")
    }

    /// Parses `channel,row,col` lines. Blank lines and `#` comments allowed.
    pub fn parse(text: &str) -> Result<ElectrodeGrid, FeatureError> {
        let mut channels = Vec::new();
        let mut cells = Vec::new();
        let mut seen = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let (name, row, col) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(n), Some(r), Some(c), None) => (n.trim(), r.trim(), c.trim()),
                _ => {
                    return Err(FeatureError::GridParse {
                        line: lineno + 1,
                        reason: "expected `channel,row,col`".into(),
                    })
                }
            };
            let row: usize = row.parse().map_err(|_| FeatureError::GridParse {
                line: lineno + 1,
                reason: format!("bad row `{row}`"),
            })?;
            let col: usize = col.parse().map_err(|_| FeatureError::GridParse {
                line: lineno + 1,
                reason: format!("bad col `{col}`"),
            })?;
            if row >= GRID_ROWS || col >= GRID_COLS {
                return Err(FeatureError::GridParse {
                    line: lineno + 1,
                    reason: format!("cell ({row},{col}) outside {GRID_ROWS}×{GRID_COLS}"),
                });
            }
            if seen.insert(name.to_string(), ()).is_some() {
                return Err(FeatureError::GridParse {
                    line: lineno + 1,
                    reason: format!("duplicate channel `{name}`"),
                });
            }
            channels.push(name.to_string());
            cells.push((row, col));
        }
        if channels.is_empty() {
            return Err(FeatureError::GridParse {
                line: 0,
                reason: "empty grid table".into(),
            });
        }

        let mut occupied = vec![false; GRID_CELLS];
        for &(r, c) in &cells {
            occupied[r * GRID_COLS + c] = true;
        }
        let occupied_cells: Vec<(usize, usize)> = (0..GRID_ROWS)
            .flat_map(|r| (0..GRID_COLS).map(move |c| (r, c)))
            .filter(|&(r, c)| occupied[r * GRID_COLS + c])
            .collect();
        let empty_cells: Vec<(usize, usize)> = (0..GRID_ROWS)
            .flat_map(|r| (0..GRID_COLS).map(move |c| (r, c)))
            .filter(|&(r, c)| !occupied[r * GRID_COLS + c])
            .collect();

        // Nearest occupied cell; occupied_cells is already row-major, and
        // strict `<` keeps the first (row-major earliest) cell on ties.
        let mut fill_from = HashMap::new();
        for &(er, ec) in &empty_cells {
            let mut best = occupied_cells[0];
            let mut best_d = f64::INFINITY;
            for &(or, oc) in &occupied_cells {
                let dr = er as f64 - or as f64;
                let dc = ec as f64 - oc as f64;
                let d = dr * dr + dc * dc;
                if d < best_d {
                    best_d = d;
                    best = (or, oc);
                }
            }
            fill_from.insert((er, ec), best);
        }

        Ok(ElectrodeGrid {
            channels,
            cells,
            empty_cells,
            fill_from,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    /// Cell of the `i`-th input channel.
    pub fn cell_of_index(&self, i: usize) -> (usize, usize) {
        self.cells[i]
    }

    pub fn cell_of(&self, channel: &str) -> Option<(usize, usize)> {
        self.channels
            .iter()
            .position(|c| c == channel)
            .map(|i| self.cells[i])
    }

    pub fn empty_cells(&self) -> &[(usize, usize)] {
        &self.empty_cells
    }

    pub fn fill_source(&self, cell: (usize, usize)) -> Option<(usize, usize)> {
        self.fill_from.get(&cell).copied()
    }

    /// Checks that `names` (the first 64 recording channels) match this
    /// grid's channel order.
    pub fn check_channel_order(&self, names: &[String]) -> Result<(), FeatureError> {
        if names.len() < self.channels.len() {
            return Err(FeatureError::ChannelCount {
                got: names.len(),
                want: self.channels.len(),
            });
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if &names[i] != ch {
                return Err(FeatureError::UnmappedChannel(names[i].clone()));
            }
        }
        Ok(())
    }
}
