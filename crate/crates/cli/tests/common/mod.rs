#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use gaussbox::harness::gen_synthetic;
use gaussbox_cli::{DetectionRecord, GroundTruthRecord};

pub fn gaussbox(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["gaussbox".to_string()];
    for a in args {
        argv.push(if a.ends_with(".jsonl") || a.ends_with(".csv") || *a == "out" {
            dir.join(a).to_string_lossy().into_owned()
        } else {
            a.to_string()
        });
    }
    gaussbox_cli::run(argv)
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Synthetic detections and ground truths as JSON Lines, one image per scene.
pub fn synthetic_fixture(dir: &Path, seed: u64, scenes: usize, dets_per_scene: usize) {
    let data = gen_synthetic(seed, scenes, dets_per_scene, 0.1).unwrap();
    let (mut dets, mut gts) = (String::new(), String::new());
    for (i, s) in data.iter().enumerate() {
        let image_id = format!("img{i:04}");
        for (class_id, b) in &s.gts {
            let r = GroundTruthRecord {
                image_id: image_id.clone(),
                class_id: *class_id,
                bbox: b.to_array(),
            };
            gts.push_str(&r.to_json_line());
            gts.push('\n');
        }
        for d in &s.dets {
            let r = DetectionRecord {
                image_id: image_id.clone(),
                class_id: d.class_id,
                score: d.score,
                bbox: d.bbox.to_array(),
                sigma: d.sigma,
            };
            dets.push_str(&r.to_json_line());
            dets.push('\n');
        }
    }
    write(dir, "dets.jsonl", &dets);
    write(dir, "gts.jsonl", &gts);
}

/// The same number of detections as ground truths in every image, paired in order.
pub fn paired_fixture(dir: &Path, seed: u64, scenes: usize) {
    let data = gen_synthetic(seed, scenes, 0, 0.1).unwrap();
    let (mut dets, mut gts) = (String::new(), String::new());
    for (i, s) in data.iter().enumerate() {
        let image_id = format!("img{i:04}");
        for (j, (class_id, b)) in s.gts.iter().enumerate() {
            let g = GroundTruthRecord {
                image_id: image_id.clone(),
                class_id: *class_id,
                bbox: b.to_array(),
            };
            let mut shifted = b.to_array();
            shifted[0] = (shifted[0] + 0.01 * j as f64).min(1.0);
            let d = DetectionRecord {
                image_id: image_id.clone(),
                class_id: *class_id,
                score: 0.5,
                bbox: shifted,
                sigma: [0.05, 0.05, 0.1, 0.1],
            };
            gts.push_str(&g.to_json_line());
            gts.push('\n');
            dets.push_str(&d.to_json_line());
            dets.push('\n');
        }
    }
    write(dir, "pdets.jsonl", &dets);
    write(dir, "pgts.jsonl", &gts);
}
