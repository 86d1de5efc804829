//! Binary PPM (P6) stimuli, 8-bit PGM (P5) saliency maps and scanpath CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SaliencyMap;
use crate::tensor::Tensor;

/// An 8-bit RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("size", "images need positive extents"));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::dim("data", format!("{width}×{height} RGB image given {} bytes", rgb.len())));
        }
        Ok(Image { width, height, rgb })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    /// Planar `[1, 3, H, W]` tensor with intensities scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        Tensor::from_fn(vec![1, 3, h, w], |k| {
            let (ch, pix) = (k / (h * w), k % (h * w));
            self.rgb[pix * 3 + ch] as f64 / 255.0
        })
    }

    /// Bilinear resize of every channel, rounded back to 8 bits.
    pub fn resample(&self, width: usize, height: usize) -> Result<Image> {
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let mut rgb = vec![0u8; width * height * 3];
        for ch in 0..3 {
            let plane: Vec<f64> = self.rgb.iter().skip(ch).step_by(3).map(|&v| v as f64).collect();
            let out = bilinear(&plane, self.width, self.height, width, height);
            for (i, v) in out.into_iter().enumerate() {
                rgb[i * 3 + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        Image::new(width, height, rgb)
    }
}

/// Bilinear resampling of a row-major plane with half-pixel-centred sampling
/// and edge clamping.
pub(crate) fn bilinear(src: &[f64], sw: usize, sh: usize, tw: usize, th: usize) -> Vec<f64> {
    let axis = |d: usize, from: usize, to: usize| {
        let s = ((d as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(from - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(tw * th);
    for r in 0..th {
        let (r0, r1, fr) = axis(r, sh, th);
        for c in 0..tw {
            let (c0, c1, fc) = axis(c, sw, tw);
            let top = src[r0 * sw + c0] * (1.0 - fc) + src[r0 * sw + c1] * fc;
            let bottom = src[r1 * sw + c0] * (1.0 - fc) + src[r1 * sw + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a binary netpbm header: magic, width, height, maxval, then exactly
/// one whitespace byte. `#` comments are skipped. Returns the dimensions and
/// the payload offset.
fn parse_header(bytes: &[u8], magic: &[u8; 2], origin: &Path) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(origin, format!("expected {} magic number", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(origin, "truncated or non-numeric header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(origin, "header must end with a single whitespace byte"));
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::format(origin, "zero image extent"));
    }
    if maxval != 255 {
        return Err(Error::format(origin, format!("only 8-bit files are supported, maxval is {maxval}")));
    }
    Ok((w, h, pos + 1))
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: usize, origin: &Path) -> Result<&'a [u8]> {
    match bytes.len().checked_sub(offset) {
        Some(n) if n == len => Ok(&bytes[offset..]),
        Some(n) => Err(Error::format(origin, format!("expected {len} payload bytes, found {n}"))),
        None => Err(Error::format(origin, "truncated header")),
    }
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.rgb);
    out
}

pub fn decode_ppm(bytes: &[u8], origin: &Path) -> Result<Image> {
    let (w, h, offset) = parse_header(bytes, b"P6", origin)?;
    Image::new(w, h, payload(bytes, offset, w * h * 3, origin)?.to_vec())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_ppm(&read_bytes(path)?, path)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(image))
}

/// Maps `[0, 1]` to `0..=255` with rounding; values outside are clamped.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(map: &SaliencyMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.values().iter().map(|&v| quantize(v)));
    out
}

pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<SaliencyMap> {
    let (w, h, offset) = parse_header(bytes, b"P5", origin)?;
    let data = payload(bytes, offset, w * h, origin)?;
    SaliencyMap::new(w, h, data.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?, path)
}

pub fn write_pgm(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(map))
}

/// Scanpath CSV with header `index,x,y` and pixel coordinates. Floats use the
/// shortest representation that parses back to the same value.
pub fn encode_scanpath_csv(pixels: &[(f64, f64)]) -> String {
    let mut out = String::from("index,x,y\n");
    for (i, (x, y)) in pixels.iter().enumerate() {
        writeln!(out, "{i},{x},{y}").expect("writing to a String");
    }
    out
}

/// Like [`encode_scanpath_csv`] with extra `x_norm,y_norm` columns, as
/// written for predictions. The reader ignores the extra columns.
pub fn encode_scanpath_csv_with_norm(pixels: &[(f64, f64)], normalised: &[(f64, f64)]) -> String {
    let mut out = String::from("index,x,y,x_norm,y_norm\n");
    for (i, ((x, y), (xn, yn))) in pixels.iter().zip(normalised).enumerate() {
        writeln!(out, "{i},{x},{y},{xn},{yn}").expect("writing to a String");
    }
    out
}

/// Parses pixel coordinates. Indices must run `0, 1, 2, …`; columns after
/// `y` (durations, normalised copies) are ignored.
pub fn decode_scanpath_csv(text: &str, origin: &Path) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[..3] != ["index", "x", "y"] {
        return Err(Error::format(origin, format!("expected header starting `index,x,y`, found `{header}`")));
    }
    let mut points = Vec::new();
    for (lineno, line) in lines {
        let bad = |msg: &str| Error::format(origin, format!("line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(bad("expected at least three columns"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("index is not an integer"))?;
        if index != points.len() {
            return Err(bad(&format!("index {index} out of sequence, expected {}", points.len())));
        }
        let x: f64 = fields[1].parse().map_err(|_| bad("x is not a number"))?;
        let y: f64 = fields[2].parse().map_err(|_| bad("y is not a number"))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(bad("non-finite coordinate"));
        }
        points.push((x, y));
    }
    Ok(points)
}

pub fn read_scanpath_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_scanpath_csv(&text, path)
}

pub fn write_scanpath_csv(path: impl AsRef<Path>, pixels: &[(f64, f64)]) -> Result<()> {
    write_bytes(path.as_ref(), encode_scanpath_csv(pixels).as_bytes())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_bytes(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn ppm_round_trip() {
        let img = Image::new(2, 1, vec![1, 2, 3, 250, 251, 252]).unwrap();
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(decode_ppm(&bytes, origin()).unwrap(), img);
    }

    #[test]
    fn header_comments_and_errors() {
        let bytes = b"P5\n# comment\n2 1\n255\n\x00\xff";
        let map = decode_pgm(bytes, origin()).unwrap();
        assert_eq!(map.values(), &[0.0, 1.0]);
        assert!(decode_pgm(b"P5\n2 1\n255\n\x00", origin()).is_err());
        assert!(decode_pgm(b"P6\n2 1\n255\n\x00\x00", origin()).is_err());
        assert!(decode_pgm(b"P5\n2 1\n65535\n\x00\x00\x00\x00", origin()).is_err());
    }

    #[test]
    fn pgm_quantizes() {
        let map = SaliencyMap::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let back = decode_pgm(&encode_pgm(&map), origin()).unwrap();
        assert_eq!(back.values(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn csv_parsing() {
        let text = "index,x,y,duration\n0,1.5,2,100\n1,3,4.25,80\n";
        assert_eq!(decode_scanpath_csv(text, origin()).unwrap(), vec![(1.5, 2.0), (3.0, 4.25)]);
        assert!(decode_scanpath_csv("index,x,y\n1,0,0\n", origin()).is_err());
        assert!(decode_scanpath_csv("i,x,y\n", origin()).is_err());
        assert!(decode_scanpath_csv("index,x,y\n0,a,0\n", origin()).is_err());
        let pts = vec![(0.1, 63.0), (1.0 / 3.0, 2.5)];
        assert_eq!(decode_scanpath_csv(&encode_scanpath_csv(&pts), origin()).unwrap(), pts);
    }

    #[test]
    fn image_tensor_layout() {
        let img = Image::new(2, 1, vec![255, 0, 0, 0, 255, 0]).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
