//! Raster decoding at the ingestion boundary and binary PGM encoding.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::imgproc::{Frame, GrayImage, RgbImage};

/// Binary P5 with maxval 255; the header is always `P5\n<w> <h>\n255\n`.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixel_count());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.to_u8());
    out
}

/// Decodes PGM/PPM/PNG bytes. Grayscale sources stay grayscale; anything
/// with color becomes RGB (alpha dropped). `origin` names the source in errors.
pub fn decode_frame(bytes: &[u8], origin: &Path) -> Result<Frame> {
    let decode_err = |reason: String| Error::Decode {
        path: origin.to_path_buf(),
        reason,
    };
    let img = image::load_from_memory(bytes).map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let frame = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => {
            Frame::Gray(GrayImage::from_u8(w, h, img.to_luma8().as_raw()).map_err(|e| decode_err(e.to_string()))?)
        }
        other => Frame::Rgb(
            RgbImage::from_u8(w, h, other.to_rgb8().as_raw()).map_err(|e| decode_err(e.to_string()))?,
        ),
    };
    Ok(frame)
}

/// Decodes and converts to grayscale.
pub fn decode_gray(bytes: &[u8], origin: &Path) -> Result<GrayImage> {
    decode_frame(bytes, origin).map(Frame::into_gray)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_payload() {
        let img = GrayImage::new(3, 2, vec![0.0, 0.5, 1.0, 1.0, 0.2, 0.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[11..], &[0, 128, 255, 255, 51, 0]);
        let back = decode_gray(&bytes, Path::new("x.pgm")).unwrap();
        assert_eq!(back, img.quantized());
    }

    #[test]
    fn decodes_png_color_and_gray() {
        let mut buf = std::io::Cursor::new(Vec::new());
        image::RgbImage::from_raw(2, 1, vec![255, 0, 0, 255, 255, 255])
            .unwrap()
            .write_to(&mut buf, image::ImageFormat::Png)
            .unwrap();
        let frame = decode_frame(buf.get_ref(), Path::new("c.png")).unwrap();
        let Frame::Rgb(rgb) = &frame else { panic!("expected color") };
        assert_eq!(rgb.pixels()[0], [1.0, 0.0, 0.0]);
        assert_eq!(frame.to_gray().pixels(), &[0.299, 1.0]);

        let mut buf = std::io::Cursor::new(Vec::new());
        image::GrayImage::from_raw(1, 1, vec![51])
            .unwrap()
            .write_to(&mut buf, image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(decode_frame(buf.get_ref(), Path::new("g.png")).unwrap(), Frame::Gray(_)));
    }

    #[test]
    fn undecodable_names_origin() {
        let err = decode_frame(b"definitely not an image", Path::new("broken.png")).unwrap_err();
        assert!(err.to_string().contains("broken.png"));
    }
}
