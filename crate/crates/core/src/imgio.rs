//! Image and label-map I/O: PNG plus ASCII PPM/PGM, and the 19-class
//! color palette used for visualizations.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Shape, Tensor};

/// Colors of the 19 urban-scene classes, RGB.
pub const PALETTE_19: [[u8; 3]; 19] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
];

/// Visualization color for any class id; ids past the fixed palette get a
/// derived deterministic color.
pub fn class_palette_color(class: usize) -> [u8; 3] {
    if class < PALETTE_19.len() {
        return PALETTE_19[class];
    }
    let c = class as u32;
    [
        ((c * 67 + 40) % 256) as u8,
        ((c * 97 + 80) % 256) as u8,
        ((c * 151 + 120) % 256) as u8,
    ]
}

/// Invert a palette color back to its class id (exact match only).
pub fn class_from_palette_color(rgb: [u8; 3]) -> Option<usize> {
    PALETTE_19.iter().position(|&c| c == rgb)
}

fn tensor_to_rgb8<S: Scalar>(image: &Tensor<S>) -> Result<(usize, usize, Vec<u8>)> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::usage(format!("expected a (1,3,h,w) image, got {s}")));
    }
    let data = image.data();
    let mut buf = Vec::with_capacity(s.h * s.w * 3);
    for y in 0..s.h {
        for x in 0..s.w {
            for ch in 0..3 {
                let v = data[s.idx(0, ch, y, x)].to_f64c().clamp(0.0, 1.0);
                buf.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok((s.h, s.w, buf))
}

fn rgb8_to_tensor<S: Scalar>(h: usize, w: usize, buf: &[u8]) -> Result<Tensor<S>> {
    let mut data = vec![S::zero(); 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                data[(ch * h + y) * w + x] = S::from_f64c(buf[(y * w + x) * 3 + ch] as f64 / 255.0);
            }
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data)
}

/// Read an RGB image (PNG or ASCII PPM, by extension) into a [0,1] tensor.
pub fn load_image<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    match extension(path)?.as_str() {
        "png" => {
            let img = image::open(path)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            rgb8_to_tensor(h, w, img.as_raw())
        }
        "ppm" => {
            let text = fs::read(path)?;
            let (h, w, px) = parse_netpbm(&text, b'3', 3, path)?;
            let buf: Vec<u8> = px.iter().map(|&v| v as u8).collect();
            rgb8_to_tensor(h, w, &buf)
        }
        other => Err(Error::usage(format!("unsupported image extension '{other}'"))),
    }
}

/// Write a [0,1] RGB tensor as PNG or ASCII PPM, by extension.
pub fn save_image<S: Scalar>(path: &Path, image: &Tensor<S>) -> Result<()> {
    let (h, w, buf) = tensor_to_rgb8(image)?;
    match extension(path)?.as_str() {
        "png" => save_png_rgb(path, h, w, &buf),
        "ppm" => {
            let mut text = format!("P3\n{w} {h}\n255\n");
            for row in buf.chunks(w * 3) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                text.push_str(&line.join(" "));
                text.push('\n');
            }
            Ok(fs::write(path, text)?)
        }
        other => Err(Error::usage(format!("unsupported image extension '{other}'"))),
    }
}

/// Read a label map: grayscale PNG or ASCII PGM, one class id per pixel.
pub fn load_labels(path: &Path) -> Result<LabelMap> {
    match extension(path)?.as_str() {
        "png" => {
            let img = image::open(path)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
                .to_luma8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.as_raw().iter().map(|&v| v as i32).collect();
            LabelMap::new(1, h, w, data)
        }
        "pgm" => {
            let text = fs::read(path)?;
            let (h, w, px) = parse_netpbm(&text, b'2', 1, path)?;
            LabelMap::new(1, h, w, px)
        }
        other => Err(Error::usage(format!("unsupported label extension '{other}'"))),
    }
}

/// Write a label map as grayscale PNG or ASCII PGM.
pub fn save_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    if labels.n != 1 {
        return Err(Error::usage("can only write single label maps"));
    }
    if let Some(&bad) = labels.data.iter().find(|&&v| !(0..=255).contains(&v)) {
        return Err(Error::usage(format!("label value {bad} does not fit a byte")));
    }
    let bytes: Vec<u8> = labels.data.iter().map(|&v| v as u8).collect();
    match extension(path)?.as_str() {
        "png" => {
            let img = image::GrayImage::from_raw(labels.w as u32, labels.h as u32, bytes)
                .expect("length checked by LabelMap");
            img.save(path)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))
        }
        "pgm" => {
            let mut text = format!("P2\n{} {}\n255\n", labels.w, labels.h);
            for row in bytes.chunks(labels.w) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                text.push_str(&line.join(" "));
                text.push('\n');
            }
            Ok(fs::write(path, text)?)
        }
        other => Err(Error::usage(format!("unsupported label extension '{other}'"))),
    }
}

/// Write a palette-colorized rendering of a label map (PNG or PPM). The
/// ignore value 255 renders black.
pub fn save_color_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    if labels.n != 1 {
        return Err(Error::usage("can only write single label maps"));
    }
    let mut data = vec![0.0f64; 3 * labels.h * labels.w];
    for (i, &v) in labels.data.iter().enumerate() {
        let rgb = if v == 255 || v < 0 {
            [0, 0, 0]
        } else {
            class_palette_color(v as usize)
        };
        for ch in 0..3 {
            data[ch * labels.h * labels.w + i] = rgb[ch] as f64 / 255.0;
        }
    }
    let t = Tensor::<f64>::from_vec(
        Shape::new(1, 3, labels.h, labels.w),
        data.into_iter().collect(),
    )?;
    save_image(path, &t)
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::usage(format!("{}: missing file extension", path.display())))
}

fn save_png_rgb(path: &Path, h: usize, w: usize, buf: &[u8]) -> Result<()> {
    let img = image::RgbImage::from_raw(w as u32, h as u32, buf.to_vec())
        .expect("length consistent by construction");
    img.save(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Parse an ASCII netpbm body (`P2` or `P3`). Errors carry the byte offset of
/// the offending token.
fn parse_netpbm(text: &[u8], magic: u8, samples: usize, path: &Path) -> Result<(usize, usize, Vec<i32>)> {
    let mut pos = 0usize;
    let (off, tok) = netpbm_token(text, &mut pos, path)?;
    if tok != [b'P', magic] {
        return Err(Error::data(format!(
            "{}: bad magic at byte {off} (expected P{})",
            path.display(),
            magic as char
        )));
    }
    let w = netpbm_num(text, &mut pos, path, "width", 1 << 20)? as usize;
    let h = netpbm_num(text, &mut pos, path, "height", 1 << 20)? as usize;
    let maxval = netpbm_num(text, &mut pos, path, "maxval", 65535)?;
    if maxval != 255 {
        return Err(Error::data(format!(
            "{}: only maxval 255 is supported, got {maxval}",
            path.display()
        )));
    }
    if w == 0 || h == 0 {
        return Err(Error::data(format!("{}: zero image dimension", path.display())));
    }
    let n = h * w * samples;
    let mut px = Vec::with_capacity(n);
    for _ in 0..n {
        px.push(netpbm_num(text, &mut pos, path, "pixel value", 255)? as i32);
    }
    Ok((h, w, px))
}

/// Next whitespace-delimited token (skipping `#` comments) and its byte offset.
fn netpbm_token(text: &[u8], pos: &mut usize, path: &Path) -> Result<(usize, Vec<u8>)> {
    loop {
        while *pos < text.len() && text[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < text.len() && text[*pos] == b'#' {
            while *pos < text.len() && text[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= text.len() {
        return Err(Error::data(format!(
            "{}: unexpected end of file at byte {pos}",
            path.display()
        )));
    }
    let start = *pos;
    while *pos < text.len() && !text[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Ok((start, text[start..*pos].to_vec()))
}

fn netpbm_num(text: &[u8], pos: &mut usize, path: &Path, what: &str, max: i64) -> Result<i64> {
    let (off, tok) = netpbm_token(text, pos, path)?;
    let v = std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .ok_or_else(|| Error::data(format!("{}: invalid {what} at byte {off}", path.display())))?;
    if v < 0 || v > max {
        return Err(Error::data(format!(
            "{}: {what} {v} out of range at byte {off}",
            path.display()
        )));
    }
    Ok(v)
}
