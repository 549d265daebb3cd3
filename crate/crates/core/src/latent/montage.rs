use crate::error::{Error, Result};
use crate::raster::Image;

/// Gray level of the separator lines between cells.
pub const SEPARATOR_VALUE: f32 = 0.5;

/// Lays images out row-major on a `rows × cols` sheet. Every cell is
/// surrounded by `border` pixels of separator; unused cells stay black.
/// A sheet is `cols·(w+border)+border` wide and `rows·(h+border)+border` tall.
pub fn montage(images: &[Image], rows: usize, cols: usize, border: usize) -> Result<Image> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "montage needs at least one row and column".into(),
        ));
    }
    if images.len() > rows * cols {
        return Err(Error::InvalidArgument(format!(
            "{} images do not fit a {rows}x{cols} sheet",
            images.len()
        )));
    }
    let Some(first) = images.first() else {
        return Err(Error::InvalidArgument("montage of zero images".into()));
    };
    let (w, h) = (first.width(), first.height());
    if let Some(odd) = images.iter().find(|i| (i.width(), i.height()) != (w, h)) {
        return Err(Error::ShapeMismatch {
            op: "montage",
            dim: "image size",
            expected: w * h,
            found: odd.width() * odd.height(),
        });
    }
    let sheet_w = cols * (w + border) + border;
    let sheet_h = rows * (h + border) + border;
    let mut sheet = Image::new(sheet_w, sheet_h, vec![SEPARATOR_VALUE; sheet_w * sheet_h])?;
    for cell in 0..rows * cols {
        let (r, c) = (cell / cols, cell % cols);
        let (x0, y0) = (border + c * (w + border), border + r * (h + border));
        let src = images.get(cell);
        for y in 0..h {
            for x in 0..w {
                sheet.set(x0 + x, y0 + y, src.map_or(0.0, |img| img.get(x, y)));
            }
        }
    }
    Ok(sheet)
}
