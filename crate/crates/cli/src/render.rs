//! ASCII rendering of occupancy maps: `#` occupied, `.` free, space
//! unknown, top row of text = maximum y.

use crawler_core::{CellState, ClassifiedGrid};

/// Rectangular character picture; row 0 is the top line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: usize,
    height: usize,
    cells: Vec<char>,
}

impl Canvas {
    /// Nearest-neighbor downsample to at most `max_width` columns, rows
    /// scaled by the same factor. Never upsamples.
    pub fn capped(&self, max_width: usize) -> Canvas {
        if self.width <= max_width {
            return self.clone();
        }
        let out_w = max_width;
        // Round the row count so the aspect ratio survives, but keep at
        // least one row.
        let out_h = ((self.height * out_w + self.width / 2) / self.width).max(1);
        let mut cells = Vec::with_capacity(out_w * out_h);
        for row in 0..out_h {
            let src_row = row * self.height / out_h;
            for col in 0..out_w {
                let src_col = col * self.width / out_w;
                cells.push(self.cells[src_row * self.width + src_col]);
            }
        }
        Canvas {
            width: out_w,
            height: out_h,
            cells,
        }
    }

    /// One line of text per row, each terminated by a newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(self.cells[row * self.width + col]);
            }
            out.push('\n');
        }
        out
    }
}

fn glyph(state: CellState) -> char {
    match state {
        CellState::Occupied => '#',
        CellState::Free => '.',
        CellState::Unknown => ' ',
    }
}

/// Renders a classified grid with the top text row at maximum y.
pub fn canvas_from_grid(grid: &ClassifiedGrid) -> Canvas {
    let (w, h) = (grid.width(), grid.height());
    let mut cells = Vec::with_capacity(w * h);
    for row in (0..h).rev() {
        for col in 0..w {
            cells.push(glyph(grid.get(col, row)));
        }
    }
    Canvas {
        width: w,
        height: h,
        cells,
    }
}

/// Parses a binary PGM (P5) map. Pixel rows are taken as written, so a
/// file produced by the mapper already has its top row at maximum y.
/// Values map to cell states by brightness: dark occupied, bright free,
/// mid-gray unknown.
pub fn canvas_from_pgm(bytes: &[u8]) -> Result<Canvas, String> {
    let mut pos = 0usize;

    let token = |pos: &mut usize| -> Result<String, String> {
        // Skip whitespace and `#` comment lines between header fields.
        loop {
            match bytes.get(*pos) {
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(b'#') => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = token(&mut pos)?;
    if magic != "P5" {
        return Err(format!("expected P5 magic, found {magic:?}"));
    }
    let parse_dim = |t: String| -> Result<usize, String> {
        t.parse::<usize>().map_err(|_| format!("bad header field {t:?}"))
    };
    let width = parse_dim(token(&mut pos)?)?;
    let height = parse_dim(token(&mut pos)?)?;
    let maxval = parse_dim(token(&mut pos)?)?;
    if width == 0 || height == 0 {
        return Err("image dimensions must be positive".into());
    }
    if maxval != 255 {
        return Err(format!("expected maxval 255, found {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing raster separator".into()),
    }

    let need = width * height;
    let raster = &bytes[pos..];
    if raster.len() != need {
        return Err(format!(
            "raster holds {} bytes, expected {need}",
            raster.len()
        ));
    }
    let cells = raster
        .iter()
        .map(|&v| match v {
            0..=63 => '#',
            192..=255 => '.',
            _ => ' ',
        })
        .collect();
    Ok(Canvas {
        width,
        height,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(pixels);
        out
    }

    #[test]
    fn pgm_round_trips_the_three_cell_glyphs() {
        let canvas = canvas_from_pgm(&pgm(3, 1, &[0, 128, 255])).unwrap();
        assert_eq!(canvas.to_text(), "# .\n");
    }

    #[test]
    fn pgm_with_comment_and_extra_whitespace_parses() {
        let bytes = b"P5 # crawler map\n  2\t1\n255\n\x00\xff".to_vec();
        let canvas = canvas_from_pgm(&bytes).unwrap();
        assert_eq!(canvas.to_text(), "#.\n");
    }

    #[test]
    fn truncated_raster_is_rejected() {
        let err = canvas_from_pgm(&pgm(4, 2, &[0; 7])).unwrap_err();
        assert!(err.contains("expected 8"), "got {err}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        assert!(canvas_from_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    #[test]
    fn cap_leaves_narrow_canvases_alone() {
        let canvas = canvas_from_pgm(&pgm(3, 2, &[0; 6])).unwrap();
        let capped = canvas.capped(10);
        assert_eq!(capped, canvas);
    }

    #[test]
    fn cap_downsamples_to_exactly_the_requested_width() {
        // 200 x 50, left half occupied, right half free.
        let mut pixels = Vec::new();
        for _ in 0..50 {
            pixels.extend(std::iter::repeat(0u8).take(100));
            pixels.extend(std::iter::repeat(255u8).take(100));
        }
        let canvas = canvas_from_pgm(&pgm(200, 50, &pixels)).unwrap();
        let capped = canvas.capped(100);
        assert_eq!(capped.width, 100);
        assert_eq!(capped.height, 25);
        let text = capped.to_text();
        let first = text.lines().next().unwrap();
        assert_eq!(&first[..50], "#".repeat(50));
        assert_eq!(&first[50..], ".".repeat(50));
    }
}
