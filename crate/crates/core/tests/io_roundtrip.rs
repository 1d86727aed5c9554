mod common;

use common::{random_image, rng};
use hogtrack::eval::{iou, GroundTruthBox, Rect};
use hogtrack::io::{
    decode_image, detections_from_csv, detections_to_csv, line_pixels, overlay, parse_annotations,
    sample_crops_with, write_pgm, write_ppm, AnnotationSet, DETECTION_COLOR, NEGATIVE_MAX_IOU,
};
use hogtrack::pnm::{decode, encode_pgm, encode_ppm, Raster};
use hogtrack::tracker::{Track, TrackPoint};
use hogtrack::{Detection, GrayImage, Label, RgbImage};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn pgm_and_ppm_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = random_image(31, 17, 2);
    let p = dir.path().join("g.pgm");
    write_pgm(&g, &p).unwrap();
    assert_eq!(decode_image(&p).unwrap(), g);

    let mut r = rng(6);
    let c = RgbImage::new(9, 4, (0..9 * 4 * 3).map(|_| r.random()).collect()).unwrap();
    let q = dir.path().join("c.ppm");
    write_ppm(&c, &q).unwrap();
    assert_eq!(decode(&std::fs::read(&q).unwrap()).unwrap(), Raster::Rgb(c));
}

#[test]
fn negatives_keep_clear_of_truth() {
    let frames: Vec<GrayImage> = (0..4).map(|i| random_image(64, 64, 100 + i)).collect();
    let ann = AnnotationSet {
        boxes: vec![
            GroundTruthBox { frame: 0, rect: Rect::new(4, 4, 16, 32) },
            GroundTruthBox { frame: 1, rect: Rect::new(30, 20, 20, 40) },
            GroundTruthBox { frame: 3, rect: Rect::new(0, 0, 40, 40) },
        ],
    };
    let set = sample_crops_with(4, |i| Ok(frames[i].clone()), &ann, (16, 16), 6, 7).unwrap();
    let negatives: Vec<_> = set.crops.iter().filter(|c| c.label == Label::Negative).collect();
    assert!(!negatives.is_empty());
    for c in negatives {
        // random-noise frames make the crop's position unique
        let frame = &frames[c.frame];
        let pos = (0..=48)
            .flat_map(|y| (0..=48).map(move |x| (x, y)))
            .find(|&(x, y)| frame.crop(x, y, 16, 16).unwrap() == c.image)
            .expect("negative comes from its frame");
        let r = Rect::new(pos.0, pos.1, 16, 16);
        for t in ann.for_frame(c.frame) {
            assert!(iou(&r, &t.rect) < NEGATIVE_MAX_IOU);
        }
    }
    assert_eq!(set.crops.iter().filter(|c| c.label == Label::Positive).count(), 3);
}

#[test]
fn overlay_draws_exactly_the_box_border() {
    let img = GrayImage::filled(20, 20, 10);
    let d = Detection {
        frame: 0,
        x: 3,
        y: 4,
        w: 10,
        h: 6,
        score: 1.0,
        features: Vec::new(),
    };
    let out = overlay(&img, &[d], &[]);
    let base = img.to_rgb();
    let mut changed = 0;
    for y in 0..20 {
        for x in 0..20 {
            if out.get(x, y) != base.get(x, y) {
                changed += 1;
                assert_eq!(out.get(x, y), DETECTION_COLOR);
                assert!(x == 3 || x == 12 || y == 4 || y == 9);
            }
        }
    }
    assert_eq!(changed, 2 * 10 + 2 * 6 - 4);
}

#[test]
fn track_segment_matches_line_oracle() {
    let img = GrayImage::filled(20, 12, 0);
    let t = Track {
        id: 0,
        points: vec![
            TrackPoint { frame: 0, cx: 2.0, cy: 3.0 },
            TrackPoint { frame: 1, cx: 12.0, cy: 7.0 },
        ],
    };
    let out = overlay(&img, &[], &[t]);
    let lit: Vec<(usize, usize)> = (0..12)
        .flat_map(|y| (0..20).map(move |x| (x, y)))
        .filter(|&(x, y)| out.get(x, y) != [0, 0, 0])
        .collect();
    // x-major line: one pixel per column at the rounded ideal height
    let mut expect: Vec<(usize, usize)> = (2..=12)
        .map(|x| (x, (3.0 + (x as f64 - 2.0) * 0.4 + 0.5).floor() as usize))
        .collect();
    expect.sort_by_key(|&(x, y)| (y, x));
    assert_eq!(lit, expect);
}

#[test]
fn annotations_and_detections_parse() {
    let ann = parse_annotations("frame,x,y,w,h\n0,1,2,10,20\n2,0,0,5,5\n", 50, 50).unwrap();
    assert_eq!(ann.boxes.len(), 2);
    assert!(parse_annotations("frame,x,y,w,h\n0,45,0,10,10\n", 50, 50).is_err());

    let dets = vec![Detection {
        frame: 3,
        x: 8,
        y: 16,
        w: 64,
        h: 128,
        score: 0.123456789012345,
        features: vec![1.0],
    }];
    let back = detections_from_csv(&detections_to_csv(&dets)).unwrap();
    assert_eq!(back[0].score, dets[0].score);
    assert_eq!((back[0].frame, back[0].x, back[0].y), (3, 8, 16));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lines_are_connected_and_close_to_ideal(
        x0 in -20i64..20, y0 in -20i64..20, x1 in -20i64..20, y1 in -20i64..20,
    ) {
        let pts = line_pixels((x0, y0), (x1, y1));
        prop_assert_eq!(pts[0], (x0, y0));
        prop_assert_eq!(*pts.last().unwrap(), (x1, y1));
        let major = (x1 - x0).abs().max((y1 - y0).abs());
        prop_assert_eq!(pts.len() as i64, major + 1);
        for w in pts.windows(2) {
            prop_assert!((w[1].0 - w[0].0).abs() <= 1 && (w[1].1 - w[0].1).abs() <= 1);
        }
        // distance along the minor axis to the ideal line stays within half a pixel
        for &(x, y) in &pts {
            let (dx, dy) = ((x1 - x0) as f64, (y1 - y0) as f64);
            if dx.abs() >= dy.abs() && dx != 0.0 {
                let ideal = y0 as f64 + (x - x0) as f64 * dy / dx;
                prop_assert!((y as f64 - ideal).abs() <= 0.5 + 1e-9);
            } else if dy != 0.0 {
                let ideal = x0 as f64 + (y - y0) as f64 * dx / dy;
                prop_assert!((x as f64 - ideal).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn pnm_encoding_round_trips(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let g = random_image(w, h, seed);
        prop_assert_eq!(decode(&encode_pgm(&g)).unwrap(), Raster::Gray(g.clone()));
        let c = g.to_rgb();
        prop_assert_eq!(decode(&encode_ppm(&c)).unwrap(), Raster::Rgb(c));
    }
}
