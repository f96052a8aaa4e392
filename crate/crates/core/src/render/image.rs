use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB image with `f64` channels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Weighted grayscale, one value per pixel.
    pub fn luma(&self, weights: [f64; 3]) -> Vec<f64> {
        self.data
            .chunks(3)
            .map(|p| weights[0] * p[0] + weights[1] * p[1] + weights[2] * p[2])
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid("crop window exceeds the image"));
        }
        Ok(Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Box-filter downsample by an integer factor until neither side
    /// exceeds `max_side`. Trailing rows/columns that do not fill a whole
    /// box are dropped.
    pub fn downsample_to(&self, max_side: usize) -> Image {
        let side = self.width.max(self.height);
        if side <= max_side {
            return self.clone();
        }
        let f = side.div_ceil(max_side);
        let (w, h) = (self.width / f, self.height / f);
        let norm = 1.0 / (f * f) as f64;
        Image::from_fn(w, h, |x, y| {
            let mut acc = [0.0; 3];
            for dy in 0..f {
                for dx in 0..f {
                    let p = self.get(x * f + dx, y * f + dy);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
            }
            acc.map(|v| v * norm)
        })
    }

    /// Quantized to 8 bits per channel.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Image> {
        if bytes.len() != width * height * 3 {
            return Err(Error::Image(format!("expected {} bytes, got {}", width * height * 3, bytes.len())));
        }
        Ok(Image { width, height, data: bytes.iter().map(|&b| b as f64 / 255.0).collect() })
    }

    /// Writes PNG or binary PPM depending on the extension (`.ppm` → P6).
    /// `meta` pairs go into tEXt chunks (PNG) or header comments (PPM).
    pub fn save(&self, path: &Path, meta: &[(&str, String)]) -> Result<()> {
        let is_ppm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            self.write_ppm(path, meta)
        } else {
            self.write_png(path, meta)
        }
    }

    pub fn load(path: &Path) -> Result<Image> {
        let mut magic = [0u8; 2];
        File::open(path)?.read_exact(&mut magic)?;
        if &magic == b"P6" {
            Self::read_ppm(path)
        } else {
            Self::read_png(path)
        }
    }

    fn write_png(&self, path: &Path, meta: &[(&str, String)]) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in meta {
            enc.add_text_chunk(k.to_string(), v.clone()).map_err(|e| Error::Image(e.to_string()))?;
        }
        let mut writer = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
        writer.write_image_data(&self.to_rgb8()).map_err(|e| Error::Image(e.to_string()))?;
        Ok(())
    }

    fn read_png(path: &Path) -> Result<Image> {
        let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
        dec.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let buf = &buf[..info.buffer_size()];
        let rgb: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => buf.to_vec(),
            png::ColorType::Rgba => buf.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            png::ColorType::Indexed => return Err(Error::Image("unexpanded palette image".into())),
        };
        Image::from_rgb8(w, h, &rgb)
    }

    /// Text metadata stored in a PNG written by [`Image::save`].
    pub fn png_text(path: &Path) -> Result<Vec<(String, String)>> {
        let dec = png::Decoder::new(BufReader::new(File::open(path)?));
        let reader = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
        Ok(reader
            .info()
            .uncompressed_latin1_text
            .iter()
            .map(|t| (t.keyword.clone(), t.text.clone()))
            .collect())
    }

    fn write_ppm(&self, path: &Path, meta: &[(&str, String)]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "P6")?;
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "255")?;
        w.write_all(&self.to_rgb8())?;
        w.flush()?;
        Ok(())
    }

    fn read_ppm(path: &Path) -> Result<Image> {
        let mut r = BufReader::new(File::open(path)?);
        let mut fields = Vec::new();
        let mut line = String::new();
        while fields.len() < 4 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Image("truncated PPM header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            fields.extend(content.split_whitespace().map(str::to_owned));
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(Error::Image("only 8-bit binary PPM (P6) is supported".into()));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Image(format!("bad PPM dimension `{s}`")));
        let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
        let mut bytes = vec![0u8; w * h * 3];
        r.read_exact(&mut bytes)?;
        Image::from_rgb8(w, h, &bytes)
    }
}
