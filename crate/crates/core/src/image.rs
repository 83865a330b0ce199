//! Image, trimap and matte types together with PNG I/O, bilinear resizing
//! and RGBA stacking.
//!
//! All pixel data is stored as `f64` in `[0, 1]`, row-major, with channels
//! interleaved. Conversion to and from 8/16-bit integers only happens at the
//! PNG boundary.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Trimap values at or above this are known foreground.
pub const FOREGROUND_THRESHOLD: f64 = 0.9;
/// Trimap values at or below this are known background.
pub const BACKGROUND_THRESHOLD: f64 = 0.1;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    Rgb,
    Gray,
}

/// A `width × height × channels` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

fn check_unit_range(data: &[f64]) -> Result<()> {
    if let Some((i, v)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidImage(format!(
            "value {v} at index {i} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "zero-sized image {width}x{height}"
        )));
    }
    if width * height * channels != len {
        return Err(Error::InvalidImage(format!(
            "data has {len} values, expected {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidChannels(channels));
        }
        check_dims(width, height, channels, data.len())?;
        check_unit_range(&data)?;
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from a per-sample function `f(x, y, channel)`.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Wraps data produced by an internal computation, clamping into `[0, 1]`.
    pub(crate) fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All channel values of pixel `index` (row-major pixel index).
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// One channel as a planar vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub(crate) fn require_channels(&self, channels: usize, what: &str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::InvalidParameter(format!(
                "{what} needs a {channels}-channel image, got {}",
                self.channels
            )));
        }
        Ok(())
    }
}

/// Per-pixel opacity in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, 1, values.len())?;
        check_unit_range(&values)?;
        Ok(AlphaMatte {
            width,
            height,
            values,
        })
    }

    /// Clamps an unconstrained solution into `[0, 1]`.
    pub fn from_solution(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, 1, values.len())?;
        for v in &mut values {
            // NaN maps to 0 rather than poisoning the matte.
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(AlphaMatte {
            width,
            height,
            values,
        })
    }

    pub fn from_image(image: &Image) -> Result<Self> {
        image.require_channels(1, "alpha matte")?;
        AlphaMatte::new(image.width, image.height, image.data.clone())
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.values.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// User-supplied rough labelling: values near 1 are foreground, near 0
/// background, everything in between unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct Trimap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Trimap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, 1, values.len())?;
        check_unit_range(&values)?;
        Ok(Trimap {
            width,
            height,
            values,
        })
    }

    pub fn from_image(image: &Image) -> Result<Self> {
        image.require_channels(1, "trimap")?;
        Trimap::new(image.width, image.height, image.data.clone())
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.values.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn split(&self) -> TrimapMasks {
        trimap_split(self)
    }
}

/// Boolean classification masks derived from a [`Trimap`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrimapMasks {
    pub is_fg: Vec<bool>,
    pub is_bg: Vec<bool>,
    pub is_known: Vec<bool>,
    pub is_unknown: Vec<bool>,
}

impl TrimapMasks {
    pub fn len(&self) -> usize {
        self.is_fg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_fg.is_empty()
    }

    pub fn num_fg(&self) -> usize {
        self.is_fg.iter().filter(|&&b| b).count()
    }

    pub fn num_bg(&self) -> usize {
        self.is_bg.iter().filter(|&&b| b).count()
    }

    pub fn num_known(&self) -> usize {
        self.is_known.iter().filter(|&&b| b).count()
    }

    pub fn num_unknown(&self) -> usize {
        self.is_unknown.iter().filter(|&&b| b).count()
    }
}

pub fn trimap_split(trimap: &Trimap) -> TrimapMasks {
    let is_fg: Vec<bool> = trimap
        .values
        .iter()
        .map(|&v| v >= FOREGROUND_THRESHOLD)
        .collect();
    let is_bg: Vec<bool> = trimap
        .values
        .iter()
        .map(|&v| v <= BACKGROUND_THRESHOLD)
        .collect();
    let is_known: Vec<bool> = is_fg.iter().zip(&is_bg).map(|(&f, &b)| f || b).collect();
    let is_unknown = is_known.iter().map(|&k| !k).collect();
    TrimapMasks {
        is_fg,
        is_bg,
        is_known,
        is_unknown,
    }
}

/// Decodes a PNG held in memory.
pub fn decode_png(bytes: &[u8], mode: ColorMode) -> Result<Image> {
    use png::{BitDepth, ColorType, Transformations};

    // Inspect the header first so low bit depths are rejected rather than
    // silently expanded.
    let header = png::Decoder::new(Cursor::new(bytes))
        .read_info()
        .map_err(|e| Error::Decode(e.to_string()))?;
    let info = header.info();
    let depth = info.bit_depth;
    let indexed = info.color_type == ColorType::Indexed;
    if !(depth == BitDepth::Eight || depth == BitDepth::Sixteen || (indexed && depth == BitDepth::Eight)) {
        return Err(Error::UnsupportedBitDepth(depth as u8));
    }

    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Decode(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let (width, height) = (frame.width as usize, frame.height as usize);

    let samples: Vec<f64> = match frame.bit_depth {
        BitDepth::Eight => buf[..frame.buffer_size()]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
        BitDepth::Sixteen => buf[..frame.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        other => return Err(Error::UnsupportedBitDepth(other as u8)),
    };
    let src_channels = match frame.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => {
            return Err(Error::Decode("palette was not expanded".into()));
        }
    };

    let pixels = samples.chunks_exact(src_channels);
    let data: Vec<f64> = match (mode, src_channels) {
        (ColorMode::Gray, 1 | 2) => pixels.map(|p| p[0]).collect(),
        (ColorMode::Gray, _) => pixels
            .map(|p| (LUMA_R * p[0] + LUMA_G * p[1] + LUMA_B * p[2]).clamp(0.0, 1.0))
            .collect(),
        (ColorMode::Rgb, 1 | 2) => pixels.flat_map(|p| [p[0]; 3]).collect(),
        (ColorMode::Rgb, _) => pixels.flat_map(|p| [p[0], p[1], p[2]]).collect(),
    };
    let channels = match mode {
        ColorMode::Gray => 1,
        ColorMode::Rgb => 3,
    };
    Image::new(width, height, channels, data)
}

/// Encodes an image as an 8-bit PNG (gray, RGB or RGBA by channel count).
pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::InvalidChannels(c)),
    };
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Encode(e.to_string()))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>, mode: ColorMode) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, mode)
}

pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Bilinear resize with edge clamping and half-pixel sample centers.
pub fn resize_bilinear(image: &Image, new_width: usize, new_height: usize) -> Result<Image> {
    let data = resize_samples(&image.data, image.width, image.height, image.channels, new_width, new_height)?;
    Ok(Image::from_clamped(new_width, new_height, image.channels, data))
}

/// Unclamped kernel of [`resize_bilinear`] on interleaved samples.
pub(crate) fn resize_samples(
    src: &[f64],
    w: usize,
    h: usize,
    ch: usize,
    new_width: usize,
    new_height: usize,
) -> Result<Vec<f64>> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::InvalidParameter(format!(
            "cannot resize to {new_width}x{new_height}"
        )));
    }
    let sx = w as f64 / new_width as f64;
    let sy = h as f64 / new_height as f64;

    let taps = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    let xtaps: Vec<_> = (0..new_width).map(|x| taps(x, sx, w)).collect();
    let at = |x: usize, y: usize, c: usize| src[(y * w + x) * ch + c];

    let mut data = Vec::with_capacity(new_width * new_height * ch);
    for y in 0..new_height {
        let (y0, y1, ty) = taps(y, sy, h);
        for &(x0, x1, tx) in &xtaps {
            for c in 0..ch {
                let top = at(x0, y0, c) + tx * (at(x1, y0, c) - at(x0, y0, c));
                let bottom = at(x0, y1, c) + tx * (at(x1, y1, c) - at(x0, y1, c));
                data.push(top + ty * (bottom - top));
            }
        }
    }
    Ok(data)
}

/// Pairs a straight (non-premultiplied) RGB foreground with its matte.
pub fn stack_images(foreground: &Image, alpha: &AlphaMatte) -> Result<Image> {
    foreground.require_channels(3, "stack_images")?;
    if foreground.width != alpha.width || foreground.height != alpha.height {
        return Err(Error::DimensionMismatch(format!(
            "foreground is {}x{}, alpha is {}x{}",
            foreground.width, foreground.height, alpha.width, alpha.height
        )));
    }
    let data = foreground
        .data
        .chunks_exact(3)
        .zip(&alpha.values)
        .flat_map(|(rgb, &a)| [rgb[0], rgb[1], rgb[2], a])
        .collect();
    Ok(Image {
        width: foreground.width,
        height: foreground.height,
        channels: 4,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn png_rgb8(width: u32, height: u32, bytes: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, width, height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.write_header().unwrap().write_image_data(bytes).unwrap();
        }
        out
    }

    #[test]
    fn white_pixel_loads_as_ones() {
        let img = decode_png(&png_rgb8(1, 1, &[255, 255, 255]), ColorMode::Rgb).unwrap();
        assert_eq!(img, Image::new(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn black_pixel_loads_as_zero_gray() {
        let img = decode_png(&png_rgb8(1, 1, &[0, 0, 0]), ColorMode::Gray).unwrap();
        assert_eq!(img, Image::new(1, 1, 1, vec![0.0]).unwrap());
    }

    #[test]
    fn luminance_conversion() {
        let bytes = [255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255];
        let img = decode_png(&png_rgb8(2, 2, &bytes), ColorMode::Gray).unwrap();
        let expected = [0.299, 0.587, 0.114, 1.0];
        for (got, want) in img.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn sixteen_bit_gray_scales_by_65535() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let raw = [0xFFu8, 0xFF, 0x80, 0x00];
            enc.write_header().unwrap().write_image_data(&raw).unwrap();
        }
        let img = decode_png(&out, ColorMode::Gray).unwrap();
        assert_eq!(img.data()[0], 1.0);
        assert_eq!(img.data()[1], 32768.0 / 65535.0);
    }

    #[test]
    fn low_bit_depth_is_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 8, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::One);
            enc.write_header().unwrap().write_image_data(&[0b1010_1010]).unwrap();
        }
        assert!(matches!(
            decode_png(&out, ColorMode::Gray),
            Err(Error::UnsupportedBitDepth(1))
        ));
    }

    #[test]
    fn garbage_is_a_decode_error() {
        assert!(matches!(
            decode_png(b"definitely not a png", ColorMode::Rgb),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = load_image("/nonexistent/dir/x.png", ColorMode::Rgb).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn half_maps_to_byte_128() {
        let img = Image::new(1, 1, 1, vec![0.5]).unwrap();
        let png = encode_png(&img).unwrap();
        let back = decode_png(&png, ColorMode::Gray).unwrap();
        assert_eq!(back.data()[0], 128.0 / 255.0);
    }

    #[test]
    fn two_channel_images_cannot_exist_or_be_saved() {
        assert!(matches!(
            Image::new(1, 1, 2, vec![0.0, 0.0]),
            Err(Error::InvalidChannels(2))
        ));
        let fake = Image {
            width: 1,
            height: 1,
            channels: 2,
            data: vec![0.0, 0.0],
        };
        assert!(matches!(encode_png(&fake), Err(Error::InvalidChannels(2))));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Image::new(2, 1, 1, vec![0.0]).is_err());
    }

    #[test]
    fn resize_identity_is_bitwise() {
        let img = Image::from_fn(5, 3, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0).unwrap();
        assert_eq!(resize_bilinear(&img, 5, 3).unwrap(), img);
    }

    #[test]
    fn resize_half_pixel_upsample() {
        let img = Image::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 4, 1).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_zero_dimension_fails() {
        let img = Image::filled(2, 2, 1, 0.3).unwrap();
        assert!(resize_bilinear(&img, 0, 2).is_err());
        assert!(resize_bilinear(&img, 2, 0).is_err());
    }

    #[test]
    fn stack_examples() {
        let fg = Image::new(1, 1, 3, vec![0.2, 0.4, 0.6]).unwrap();
        let a = AlphaMatte::new(1, 1, vec![0.5]).unwrap();
        assert_eq!(stack_images(&fg, &a).unwrap().data(), &[0.2, 0.4, 0.6, 0.5]);

        let fg = Image::filled(3, 2, 3, 0.7).unwrap();
        for v in [0.0, 1.0] {
            let a = AlphaMatte::new(3, 2, vec![v; 6]).unwrap();
            let out = stack_images(&fg, &a).unwrap();
            assert_eq!(out.channels(), 4);
            assert!(out.data().chunks(4).all(|p| p[3] == v && p[..3] == [0.7; 3]));
        }
        let wrong = AlphaMatte::new(2, 2, vec![1.0; 4]).unwrap();
        assert!(matches!(stack_images(&fg, &wrong), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn trimap_thresholds() {
        let t = Trimap::new(5, 1, vec![0.0, 0.1, 0.5, 0.9, 1.0]).unwrap();
        let m = t.split();
        assert_eq!(m.is_bg, [true, true, false, false, false]);
        assert_eq!(m.is_unknown, [false, false, true, false, false]);
        assert_eq!(m.is_fg, [false, false, false, true, true]);

        let all_fg = Trimap::new(2, 2, vec![1.0; 4]).unwrap().split();
        assert!(all_fg.is_fg.iter().all(|&b| b));
        assert_eq!(all_fg.num_unknown(), 0);
        let all_unknown = Trimap::new(2, 2, vec![0.5; 4]).unwrap().split();
        assert!(all_unknown.is_unknown.iter().all(|&b| b));
    }

    proptest! {
        #[test]
        fn trimap_split_partitions(values in prop::collection::vec(0.0f64..=1.0, 1..64)) {
            let n = values.len();
            let m = Trimap::new(n, 1, values).unwrap().split();
            prop_assert_eq!(m.num_fg() + m.num_bg() + m.num_unknown(), n);
            for i in 0..n {
                prop_assert!(!(m.is_fg[i] && m.is_bg[i]));
                prop_assert_eq!(m.is_known[i], m.is_fg[i] || m.is_bg[i]);
                prop_assert_eq!(m.is_unknown[i], !m.is_known[i]);
            }
        }

        #[test]
        fn resize_stays_within_input_bounds(
            w in 1usize..8, h in 1usize..8, nw in 1usize..20, nh in 1usize..20,
            seed in any::<u64>(),
        ) {
            let mut s = seed;
            let img = Image::from_fn(w, h, 1, |_, _, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = resize_bilinear(&img, nw, nh).unwrap();
            prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));

            let constant = Image::filled(w, h, 3, 0.37).unwrap();
            let out = resize_bilinear(&constant, nw, nh).unwrap();
            prop_assert!(out.data().iter().all(|&v| v == 0.37));
        }

        #[test]
        fn eight_bit_round_trip(bytes in prop::collection::vec(any::<u8>(), 12)) {
            let img = Image::new(2, 2, 3, bytes.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
            let back = decode_png(&encode_png(&img).unwrap(), ColorMode::Rgb).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
