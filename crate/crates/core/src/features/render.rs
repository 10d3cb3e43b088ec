use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::features::archetypes::ArchetypeBank;
use crate::features::scene::SceneSpec;
use crate::features::types::{DepthMap, FeatureMap, Mask};
use crate::util::{derive_seed, rng_from, sample_normal};

/// Everything the synthetic backend produces for one frame.
///
/// `part_ids` carries the ground-truth part index per pixel (-1 for
/// background). It exists for evaluation and tests; observation pipelines
/// consume only features, depth and mask.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub features: FeatureMap,
    pub depth: DepthMap,
    pub mask: Mask,
    pub part_ids: Array2<i32>,
}

/// Render a scene into dense per-pixel features, depth, and a relevance
/// mask.
///
/// Each pixel takes the archetype of the topmost part covering it (the
/// background archetype otherwise), perturbed by noise drawn in the
/// tangent space of the unit sphere and clipped to magnitude
/// `noise_sigma`. The clip bounds the angular error of every pixel by
/// `atan(noise_sigma)`. Depth is metric distance along the optical axis;
/// a pixel's reading drops out (encoded invalid) with probability
/// `hole_prob`. Output is deterministic in `scene.seed`, with pixels
/// processed row major.
pub fn synth_render(scene: &SceneSpec, bank: &ArchetypeBank) -> Result<RenderOutput> {
    scene.validate()?;
    if scene.background >= bank.background_count() {
        return Err(Error::InvalidScene(format!(
            "background archetype {} out of range ({} available)",
            scene.background,
            bank.background_count()
        )));
    }
    for (oi, obj) in scene.objects.iter().enumerate() {
        for (pi, part) in obj.parts.iter().enumerate() {
            if part.archetype >= bank.part_count() {
                return Err(Error::InvalidScene(format!(
                    "object {oi} part {pi} archetype {} out of range ({} available)",
                    part.archetype,
                    bank.part_count()
                )));
            }
        }
    }

    let cam = &scene.camera;
    let (height, width, dim) = (cam.height, cam.width, bank.dim());

    // flattened (object, part) candidates, topmost surface first
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (oi, obj) in scene.objects.iter().enumerate() {
        for pi in 0..obj.parts.len() {
            candidates.push((oi, pi));
        }
    }
    candidates.sort_by(|a, b| {
        let za = scene.objects[a.0].parts[a.1].top_z;
        let zb = scene.objects[b.0].parts[b.1].top_z;
        zb.partial_cmp(&za).unwrap().then(a.cmp(b))
    });
    // global part id = position in object-major order
    let part_id_of = |oi: usize, pi: usize| -> i32 {
        let mut id = 0;
        for o in &scene.objects[..oi] {
            id += o.parts.len();
        }
        (id + pi) as i32
    };

    let mut features = Array3::<f32>::zeros((height, width, dim));
    let mut depth = Array2::<f32>::zeros((height, width));
    let mut mask = Array2::<bool>::from_elem((height, width), false);
    let mut part_ids = Array2::<i32>::from_elem((height, width), -1);

    let mut noise_rng = rng_from(derive_seed(scene.seed, "render-noise", 0));
    let mut hole_rng = rng_from(derive_seed(scene.seed, "render-holes", 0));
    let sigma = scene.noise_sigma;
    let mut gauss = vec![0.0f64; dim];

    for h in 0..height {
        for w in 0..width {
            // ray through the pixel, world frame, unit optical-axis depth
            let dir_cam = [(w as f64 - cam.cx) / cam.fx, (h as f64 - cam.cy) / cam.fy, 1.0];
            let r = &cam.rotation;
            let dir = [
                r[0][0] * dir_cam[0] + r[0][1] * dir_cam[1] + r[0][2] * dir_cam[2],
                r[1][0] * dir_cam[0] + r[1][1] * dir_cam[1] + r[1][2] * dir_cam[2],
                r[2][0] * dir_cam[0] + r[2][1] * dir_cam[1] + r[2][2] * dir_cam[2],
            ];

            let mut hit: Option<(f64, usize, usize)> = None;
            for &(oi, pi) in &candidates {
                let part = &scene.objects[oi].parts[pi];
                if dir[2].abs() < 1e-12 {
                    continue;
                }
                let d = (part.top_z - cam.position[2]) / dir[2];
                if d <= 0.0 {
                    continue;
                }
                let px = cam.position[0] + d * dir[0];
                let py = cam.position[1] + d * dir[1];
                let local = scene.objects[oi].pose.apply_inverse([px, py]);
                if part.shape.contains(local) {
                    hit = Some((d, oi, pi));
                    break;
                }
            }

            let (d, base, relevant, pid) = match hit {
                Some((d, oi, pi)) => (
                    d,
                    bank.part(scene.objects[oi].parts[pi].archetype),
                    scene.objects[oi].relevant,
                    part_id_of(oi, pi),
                ),
                None => {
                    let d = if dir[2].abs() < 1e-12 {
                        0.0
                    } else {
                        (0.0 - cam.position[2]) / dir[2]
                    };
                    (d.max(0.0), bank.background(scene.background), false, -1)
                }
            };

            if sigma > 0.0 {
                let a: Vec<f64> = base.iter().map(|x| f64::from(*x)).collect();
                for g in gauss.iter_mut() {
                    *g = sigma * sample_normal(&mut noise_rng);
                }
                let along: f64 = gauss.iter().zip(&a).map(|(g, ai)| g * ai).sum();
                let mut n: Vec<f64> = gauss.iter().zip(&a).map(|(g, ai)| g - along * ai).collect();
                let mag = n.iter().map(|x| x * x).sum::<f64>().sqrt();
                if mag > sigma {
                    let scale = sigma / mag;
                    for x in n.iter_mut() {
                        *x *= scale;
                    }
                }
                let mut f: Vec<f64> = a.iter().zip(&n).map(|(ai, ni)| ai + ni).collect();
                let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in f.iter_mut() {
                    *x /= norm;
                }
                for (k, x) in f.iter().enumerate() {
                    features[[h, w, k]] = *x as f32;
                }
            } else {
                for (k, x) in base.iter().enumerate() {
                    features[[h, w, k]] = *x;
                }
            }

            let dropped = scene.hole_prob > 0.0 && {
                use rand::Rng;
                hole_rng.gen::<f64>() < scene.hole_prob
            };
            depth[[h, w]] = if dropped || d <= 0.0 { 0.0 } else { d as f32 };
            mask[[h, w]] = relevant;
            part_ids[[h, w]] = pid;
        }
    }

    Ok(RenderOutput {
        features: FeatureMap::new(features)?,
        depth: DepthMap::from_raw(depth),
        mask: Mask::new(mask),
        part_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::scene::{calibration_scene, Part, PartShape, Pose2, SceneObject};
    use crate::features::types::CameraModel;

    fn cam() -> CameraModel {
        CameraModel::top_down(64, 64, 72.0, [0.5, 0.5, 1.4])
    }

    fn cos32(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn zero_noise_pixels_equal_archetypes_bitwise() {
        let bank = ArchetypeBank::generate(32, 8, 2, 11).unwrap();
        let scene = calibration_scene(cam(), 8, 0.0, 5);
        let out = synth_render(&scene, &bank).unwrap();
        let mut seen_part = vec![false; 8];
        for h in 0..64 {
            for w in 0..64 {
                let pid = out.part_ids[[h, w]];
                let expected = if pid < 0 {
                    bank.background(0)
                } else {
                    seen_part[pid as usize] = true;
                    bank.part(scene.objects[pid as usize].parts[0].archetype)
                };
                assert_eq!(out.features.at(h, w), expected);
            }
        }
        assert!(seen_part.iter().all(|s| *s), "every object should be visible");
    }

    #[test]
    fn noisy_pixels_stay_within_clipped_angle() {
        let sigma = 0.1f64;
        let bank = ArchetypeBank::generate(32, 8, 2, 11).unwrap();
        let scene = calibration_scene(cam(), 8, sigma, 5);
        let out = synth_render(&scene, &bank).unwrap();
        let floor = 1.0 / (1.0 + sigma * sigma).sqrt();
        for h in 0..64 {
            for w in 0..64 {
                let pid = out.part_ids[[h, w]];
                let base = if pid < 0 {
                    bank.background(0)
                } else {
                    bank.part(scene.objects[pid as usize].parts[0].archetype)
                };
                let c = cos32(out.features.at(h, w), base);
                assert!(
                    c >= floor - 1e-6,
                    "pixel ({h},{w}) cosine {c} below clip floor {floor}"
                );
            }
        }
    }

    #[test]
    fn render_is_deterministic_in_seed() {
        let bank = ArchetypeBank::generate(32, 6, 2, 2).unwrap();
        let mut scene = calibration_scene(cam(), 6, 0.07, 9);
        scene.hole_prob = 0.05;
        let a = synth_render(&scene, &bank).unwrap();
        let b = synth_render(&scene, &bank).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.depth, b.depth);
        scene.seed = 10;
        let c = synth_render(&scene, &bank).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn depth_encodes_plane_heights_and_holes() {
        let bank = ArchetypeBank::generate(16, 4, 2, 3).unwrap();
        let mut scene = calibration_scene(cam(), 4, 0.0, 1);
        scene.hole_prob = 0.0;
        let out = synth_render(&scene, &bank).unwrap();
        // nadir pixel: background at the camera altitude
        let c = scene.camera.clone();
        let (h0, w0) = (c.cy as usize, c.cx as usize);
        if out.part_ids[[h0, w0]] < 0 {
            assert!((out.depth.get(h0, w0).unwrap() - 1.4).abs() < 1e-4);
        }
        // disc-covered pixels sit one part height closer
        for h in 0..64 {
            for w in 0..64 {
                if out.part_ids[[h, w]] >= 0 {
                    let d = out.depth.get(h, w).unwrap();
                    assert!(d < 1.4 && d > 1.3, "object depth {d}");
                }
            }
        }

        scene.hole_prob = 0.3;
        let out = synth_render(&scene, &bank).unwrap();
        let invalid = (0..64)
            .flat_map(|h| (0..64).map(move |w| (h, w)))
            .filter(|&(h, w)| !out.depth.is_valid(h, w))
            .count();
        let frac = invalid as f64 / (64.0 * 64.0);
        assert!((frac - 0.3).abs() < 0.05, "hole fraction {frac}");
    }

    #[test]
    fn topmost_part_wins_overlap() {
        let bank = ArchetypeBank::generate(16, 4, 2, 3).unwrap();
        let obj = SceneObject {
            pose: Pose2 { x: 0.5, y: 0.5, theta: 0.0 },
            parts: vec![
                Part {
                    shape: PartShape::Disc { radius: 0.08 },
                    offset: [0.0, 0.0],
                    top_z: 0.01,
                    archetype: 0,
                },
                Part {
                    shape: PartShape::Disc { radius: 0.03 },
                    offset: [0.0, 0.0],
                    top_z: 0.03,
                    archetype: 1,
                },
            ],
            relevant: true,
        };
        let scene = SceneSpec {
            camera: cam(),
            objects: vec![obj],
            background: 0,
            noise_sigma: 0.0,
            hole_prob: 0.0,
            seed: 0,
        };
        let out = synth_render(&scene, &bank).unwrap();
        let (h0, w0) = (32, 32);
        assert_eq!(out.part_ids[[h0, w0]], 1, "small raised disc covers the center");
        assert_eq!(out.features.at(h0, w0), bank.part(1));
    }

    #[test]
    fn mask_covers_relevant_objects_only() {
        let bank = ArchetypeBank::generate(16, 4, 2, 3).unwrap();
        let mut scene = calibration_scene(cam(), 2, 0.0, 1);
        scene.objects[1].relevant = false;
        let out = synth_render(&scene, &bank).unwrap();
        assert!(out.mask.count() > 0);
        for (h, w) in out.mask.iter_true() {
            assert_eq!(out.part_ids[[h, w]], 0);
        }
    }
}
