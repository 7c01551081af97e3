//! 8-bit RGB raster with bilinear sampling.

/// H×W RGB image with 8-bit channels, row-major storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![[0; 3]; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Self {
        assert_eq!(pixels.len(), width * height);
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Normalized color at an integer pixel, channels in [0,1].
    pub fn get_f64(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.get(x, y);
        [
            p[0] as f64 / 255.0,
            p[1] as f64 / 255.0,
            p[2] as f64 / 255.0,
        ]
    }

    /// True when (u,v) lies inside the sampling domain [0,W-1]×[0,H-1].
    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }

    /// Bilinear sample at sub-pixel (u,v); neighbor indices are clamped to
    /// the frame. Callers must ensure `in_bounds(u, v)` holds.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f64; 3] {
        let x0 = u.floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let y0 = v.floor().clamp(0.0, (self.height - 1) as f64) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;

        let c00 = self.get_f64(x0, y0);
        let c10 = self.get_f64(x1, y0);
        let c01 = self.get_f64(x0, y1);
        let c11 = self.get_f64(x1, y1);

        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = c00[ch] * (1.0 - fx) + c10[ch] * fx;
            let bot = c01[ch] * (1.0 - fx) + c11[ch] * fx;
            out[ch] = top * (1.0 - fy) + bot * fy;
        }
        out
    }

    /// Rec. 601 luminance of an integer pixel, in [0,1].
    pub fn luminance(&self, x: usize, y: usize) -> f64 {
        let c = self.get_f64(x, y);
        luma(c)
    }
}

/// Rec. 601 luminance of a normalized RGB triple.
pub fn luma(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}
