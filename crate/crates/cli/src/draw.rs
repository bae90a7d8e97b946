use image::{Rgb, RgbImage};
use pastpose::eval::SweepPoint;
use pastpose::skeleton::BONES;
use pastpose::{Frame, Pose2D};

pub const CURRENT_COLOR: [u8; 3] = [255, 255, 255];

/// Distinct hues for hypotheses.
pub fn palette(i: usize) -> [u8; 3] {
    const P: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    P[i % P.len()]
}

/// Grayscale rendering of a thermal frame.
pub fn frame_image(frame: &Frame) -> RgbImage {
    RgbImage::from_fn(frame.width as u32, frame.height as u32, |x, y| {
        let v = (frame.at(y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

pub fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

pub fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3]) {
    let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        put(img, (x0 + t * (x1 - x0)).floor() as i64, (y0 + t * (y1 - y0)).floor() as i64, c);
    }
}

pub fn skeleton(img: &mut RgbImage, pose: &Pose2D, c: [u8; 3]) {
    for &(a, b) in BONES.iter() {
        if pose.valid[a] && pose.valid[b] {
            let (pa, pb) = (pose.joints[a], pose.joints[b]);
            line(img, (pa.x as f64, pa.y as f64), (pb.x as f64, pb.y as f64), c);
        }
    }
    let t = pose.torso();
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, t.x.floor() as i64 + dx, t.y.floor() as i64 + dy, c);
        }
    }
}

/// The frame with the current pose in white and every hypothesis in colour.
pub fn overlay(frame: &Frame, current: &Pose2D, hypotheses: &[Pose2D]) -> RgbImage {
    let mut img = frame_image(frame);
    for (i, h) in hypotheses.iter().enumerate() {
        skeleton(&mut img, h, palette(i));
    }
    skeleton(&mut img, current, CURRENT_COLOR);
    img
}

/// A `cols`-wide grid of panels, one hypothesis each, in the given order.
pub fn ranked_panels(frame: &Frame, current: &Pose2D, ranked: &[Pose2D], cols: usize) -> RgbImage {
    let (w, h) = (frame.width as u32, frame.height as u32);
    let cols = cols.max(1).min(ranked.len().max(1));
    let rows = ranked.len().div_ceil(cols).max(1);
    let mut out = RgbImage::new(w * cols as u32, h * rows as u32);
    for (i, pose) in ranked.iter().enumerate() {
        let mut panel = frame_image(frame);
        skeleton(&mut panel, current, CURRENT_COLOR);
        skeleton(&mut panel, pose, palette(i));
        let (ox, oy) = ((i % cols) as u32 * w, (i / cols) as u32 * h);
        for (x, y, p) in panel.enumerate_pixels() {
            out.put_pixel(ox + x, oy + y, *p);
        }
    }
    out
}

/// Line plot of expected distance against mark scale.
pub fn sweep_plot(points: &[SweepPoint]) -> RgbImage {
    let (w, h, m) = (480u32, 320u32, 40.0);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let black = [0, 0, 0];
    let (x0, x1, y0, y1) = (m, w as f64 - m, h as f64 - m, m);
    line(&mut img, (x0, y0), (x1, y0), black);
    line(&mut img, (x0, y0), (x0, y1), black);
    if points.is_empty() {
        return img;
    }
    let smax = points.iter().map(|p| p.scale).fold(f64::MIN, f64::max);
    let smin = points.iter().map(|p| p.scale).fold(f64::MAX, f64::min);
    let dmax = points.iter().map(|p| p.expected_distance).fold(f64::MIN, f64::max);
    let dmin = points.iter().map(|p| p.expected_distance).fold(f64::MAX, f64::min);
    let sx = |s: f64| x0 + (s - smin) / (smax - smin).max(1e-12) * (x1 - x0);
    let sy = |d: f64| y0 + (d - dmin) / (dmax - dmin).max(1e-12) * (y1 - y0);
    let blue = [0, 90, 200];
    for pair in points.windows(2) {
        line(
            &mut img,
            (sx(pair[0].scale), sy(pair[0].expected_distance)),
            (sx(pair[1].scale), sy(pair[1].expected_distance)),
            blue,
        );
    }
    for p in points {
        let (cx, cy) = (sx(p.scale) as i64, sy(p.expected_distance) as i64);
        for dy in -2..=2 {
            for dx in -2..=2 {
                put(&mut img, cx + dx, cy + dy, blue);
            }
        }
    }
    img
}
