//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use drape_core::coordination::{check_coordination, fix_coordination, Layer, DEFAULT_MARGIN};
use drape_core::demo;
use drape_core::dsl::{self, parse_template, parse_templates, print_template, random_template, ErrorKind};
use drape_core::layout::{label_closure, label_tuck, ClosureThresholds, LayoutClass};
use drape_core::metrics::structural_loss;
use drape_core::pipeline::{boundary_distance, interpolate, Engine, Garment, Outfit, PersonScene};
use drape_core::schema::PointGroup;
use drape_core::tps::TpsWarp;
use drape_core::warp::split_garment;
use drape_core::{
    default_schema, BodyPose, Closure, ControlPointSet, Dims, GarmentCategory, Joint, Point, SemanticLayout,
    StyleVector, Tuck,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scene_for(pose: BodyPose) -> PersonScene {
    let p = demo::person(demo::CANVAS, &pose);
    PersonScene {
        image: p.image,
        pose,
        layout: p.layout,
    }
}

fn shipped(name: &str) -> dsl::EditTemplate {
    dsl::shipped_library(default_schema())
        .into_iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("no shipped template {name}"))
}

fn garment(cat: GarmentCategory, id: &str, seed: u64) -> Garment {
    Garment {
        asset: demo::garment(default_schema(), cat, id, seed),
        style: StyleVector::default(),
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
}

fn tps_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst_residual, mut worst_affine) = (0f64, 0f64);
    let mut fits = 0;
    while fits < 200 {
        let n = rng.gen_range(3..=30);
        let src: Vec<Point> = (0..n).map(|_| random_point(&mut rng)).collect();
        let dst: Vec<Point> = (0..n).map(|_| random_point(&mut rng)).collect();
        // Random sites can be (nearly) collinear; the fit refuses those.
        let Ok(warp) = TpsWarp::fit(&src, &dst, 0.0) else { continue };
        for (s, d) in src.iter().zip(&dst) {
            worst_residual = worst_residual.max((warp.transform(*s) - d).norm());
        }
        let (a, b, c, d) = (
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let (tx, ty) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let affine: Vec<Point> = src
            .iter()
            .map(|p| Point::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty))
            .collect();
        let aw = TpsWarp::fit(&src, &affine, 0.0).map_err(|e| e.to_string())?;
        worst_affine = worst_affine.max(aw.weight_norm());
        fits += 1;
    }
    let elapsed = start.elapsed();
    ensure(worst_residual < 1e-6, || format!("site residual {worst_residual:e} >= 1e-6"))?;
    ensure(worst_affine < 1e-8, || format!("affine weight norm {worst_affine:e} >= 1e-8"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "200 fits, max residual {worst_residual:.1e}, max affine weight norm {worst_affine:.1e}, {elapsed:.2?}"
    ))
}

fn random_set(rng: &mut ChaCha8Rng) -> ControlPointSet {
    let mut k = ControlPointSet::empty(default_schema().version.clone());
    let n = rng.gen_range(3..=49);
    for id in rand::seq::index::sample(rng, 49, n) {
        let p = random_point(rng);
        k.set(id, p);
    }
    k
}

fn isometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_rigid = 0f64;
    for _ in 0..1000 {
        let k = random_set(&mut rng);
        let (s, c) = rng.gen_range(0.0..2.0 * PI).sin_cos();
        let (tx, ty) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let moved = k.map_coords(|p| Point::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty));
        worst_rigid = worst_rigid.max(structural_loss(&k, &moved).map_err(|e| e.to_string())?);
    }
    let mut least_aniso = f64::INFINITY;
    for _ in 0..1000 {
        let k = random_set(&mut rng);
        let sx = rng.gen_range(1.05..2.0);
        let sy = rng.gen_range(0.5..0.95);
        let scaled = k.map_coords(|p| Point::new(sx * p.x, sy * p.y));
        least_aniso = least_aniso.min(structural_loss(&k, &scaled).map_err(|e| e.to_string())?);
    }
    let mut a = ControlPointSet::empty("v");
    a.set(0, Point::new(0.0, 0.0));
    a.set(1, Point::new(3.0, 4.0));
    let mut b = a.clone();
    b.set(1, Point::new(6.0, 8.0));
    // D has off-diagonal entries 5 and 10, twice each: sqrt(2 * 25).
    let hand = structural_loss(&a, &b).map_err(|e| e.to_string())?;
    ensure(worst_rigid < 1e-9, || format!("rigid L_s {worst_rigid:e}"))?;
    ensure(least_aniso > 0.0, || "an anisotropic pair gave L_s = 0".into())?;
    ensure((hand - 50f64.sqrt()).abs() < 1e-9, || format!("hand value {hand}"))?;
    Ok(format!(
        "rigid max {worst_rigid:.1e}, anisotropic min {least_aniso:.3e}, hand value {hand:.12}"
    ))
}

fn instance_independence() -> Check {
    let schema = default_schema();
    let engine = Engine::default();
    let person = scene_for(demo::pose());
    let (tc, wc) = (schema.id_of("torso_center").unwrap(), schema.id_of("waistline_center").unwrap());
    let tuck = shipped("front_tuck");
    let pairs: Vec<(u64, u64)> = (0..20).flat_map(|t| (0..5).map(move |b| (t, b))).collect();
    let exact = pairs
        .par_iter()
        .map(|&(t, b)| {
            let mut outfit = Outfit::new(
                person.clone(),
                vec![
                    garment(GarmentCategory::Bottom, &format!("bottom_{b}"), 500 + b),
                    garment(GarmentCategory::Top, &format!("top_{t}"), 100 + t),
                ],
            );
            outfit.templates = vec![tuck.clone()];
            let r = engine.render(&outfit).map_err(|e| e.to_string())?;
            Ok(r.points[1].coords[tc].y == r.points[0].coords[wc].y)
        })
        .collect::<Result<Vec<bool>, String>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    ensure(exact == 100, || format!("{exact}/100 front_tuck renders exact"))?;

    let up = shipped("waist_up");
    let deltas = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let mut outfit = Outfit::new(
                person.clone(),
                vec![garment(GarmentCategory::Skirt, &format!("skirt_{k}"), 900 + k)],
            );
            outfit.templates = vec![up.clone()];
            let r = engine.render(&outfit).map_err(|e| e.to_string())?;
            Ok(r.points[0]
                .present_ids()
                .map(|i| (i, r.points[0].coords[i] - r.predicted[0].coords[i]))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let first = &deltas[0];
    ensure(!first.is_empty(), || "no skirt points".into())?;
    for (k, d) in deltas.iter().enumerate() {
        ensure(d == first, || format!("skirt {k}: deltas differ from skirt 0"))?;
    }
    let off = first.iter().map(|(_, v)| (v.x.abs()).max((v.y + 0.03).abs())).fold(0f64, f64::max);
    ensure(off < 1e-12, || format!("delta off (0, -0.03) by {off:e}"))?;
    Ok(format!(
        "front_tuck 100/100 exact; waist_up deltas identical on 20 skirts ({} points each)",
        first.len()
    ))
}

fn split_partition() -> Check {
    let schema = default_schema();
    let catalog = demo::catalog(schema, GarmentCategory::Outerwear, "coat", 10, 8);
    for asset in &catalog {
        let (l, r) = split_garment(asset, schema).map_err(|e| e.to_string())?;
        let d = asset.dims();
        for y in 0..d.height {
            for x in 0..d.width {
                let (a, b, o) = (l.mask.get(x, y), r.mask.get(x, y), asset.mask.get(x, y));
                ensure((a || b) == o && !(a && b), || format!("{} pixel ({x},{y})", asset.id))?;
            }
        }
        ensure(l.mask.count() > 0 && r.mask.count() > 0, || format!("{}: empty half", asset.id))?;
    }
    Ok("10 assets, union == original and halves disjoint at every pixel".into())
}

/// Outside the convex hull of `set` iff the directions from `p` to the set
/// leave an angular gap wider than a half turn.
fn outside_hull(p: Point, set: &[Point]) -> bool {
    let mut angles: Vec<f64> = set
        .iter()
        .filter(|s| (**s - p).norm() > 1e-12)
        .map(|s| (s.y - p.y).atan2(s.x - p.x))
        .collect();
    if angles.len() < set.len() {
        return false;
    }
    angles.sort_by(f64::total_cmp);
    let mut gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap > PI + 1e-9
}

fn present(k: &ControlPointSet) -> Vec<Point> {
    k.present_ids().map(|i| k.coords[i]).collect()
}

fn jittered(rng: &mut ChaCha8Rng) -> BodyPose {
    let (dx, dy, s) = (rng.gen_range(-0.05..0.05), rng.gen_range(-0.03..0.03), rng.gen_range(0.9..1.1));
    demo::pose().map_joints(|p| Point::new(0.5 + s * (p.x - 0.5) + dx, 0.5 + s * (p.y - 0.5) + dy))
}

/// Points of each layer outside the hull of some outerwear above it.
fn oracle_outside(layers: &[(GarmentCategory, &ControlPointSet)]) -> usize {
    let mut count = 0;
    for (i, (_, k)) in layers.iter().enumerate() {
        for p in present(k) {
            let out = layers[i + 1..]
                .iter()
                .any(|(c, o)| *c == GarmentCategory::Outerwear && outside_hull(p, &present(o)));
            count += usize::from(out);
        }
    }
    count
}

fn coordination_fixpoint() -> Check {
    let engine = Engine::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let predict = |pose: BodyPose, cat: GarmentCategory| {
        let outfit = Outfit::new(scene_for(pose), vec![garment(cat, "g", 1)]);
        engine.predict(&outfit, 0, &StyleVector::default()).unwrap()
    };
    let mut injected = 0;
    for n in 0..100 {
        let violating = n < 50;
        let mut outers: Vec<ControlPointSet> = (0..rng.gen_range(1..=2))
            .map(|_| predict(jittered(&mut rng), GarmentCategory::Outerwear))
            .collect();
        if outers.len() == 2 && !violating {
            // A lower coat shrunk toward the upper one's centroid sits inside it.
            let pts = present(&outers[1]);
            let c = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
            let c = Point::new(c.0 / pts.len() as f64, c.1 / pts.len() as f64);
            outers[0] = outers[1].map_coords(|p| c + (p - c) * 0.8);
        }
        let hulls: Vec<Vec<Point>> = outers.iter().map(present).collect();
        let inside_all = |p: Point| hulls.iter().all(|h| !outside_hull(p, h));
        let mut inners = vec![
            predict(jittered(&mut rng), GarmentCategory::Skirt),
            predict(jittered(&mut rng), GarmentCategory::Top),
        ];
        // Start every inner point strictly inside all outerwear.
        for k in &mut inners {
            for id in k.present_ids().collect::<Vec<_>>() {
                let p = loop {
                    let w: Vec<f64> = hulls[0].iter().map(|_| rng.gen_range(0.0..1.0)).collect();
                    let sum: f64 = w.iter().sum();
                    let (x, y) = hulls[0]
                        .iter()
                        .zip(&w)
                        .fold((0.0, 0.0), |(x, y), (p, w)| (x + p.x * w / sum, y + p.y * w / sum));
                    let p = Point::new(x, y);
                    if inside_all(p) {
                        break p;
                    }
                };
                k.coords[id] = p;
            }
        }
        if violating {
            for k in &mut inners {
                let ids: Vec<usize> = k.present_ids().collect();
                for _ in 0..rng.gen_range(1..=4) {
                    let id = ids[rng.gen_range(0..ids.len())];
                    let p = k.coords[id];
                    k.coords[id] = Point::new(p.x + rng.gen_range(-0.6..0.6), p.y + rng.gen_range(0.3..0.5));
                }
            }
        }
        let cats: Vec<GarmentCategory> = [GarmentCategory::Skirt, GarmentCategory::Top]
            .into_iter()
            .chain(outers.iter().map(|_| GarmentCategory::Outerwear))
            .collect();
        let sets: Vec<&ControlPointSet> = inners.iter().chain(&outers).collect();
        let layers: Vec<Layer> = cats
            .iter()
            .zip(&sets)
            .map(|(&category, &points)| Layer { category, points })
            .collect();
        let before = oracle_outside(&cats.iter().copied().zip(sets.iter().copied()).collect::<Vec<_>>());
        let violations = check_coordination(&layers);
        ensure(violations.is_empty() == (before == 0), || {
            format!("outfit {n}: check found {} violations, oracle {before}", violations.len())
        })?;
        let fixed = fix_coordination(&layers, &violations, DEFAULT_MARGIN).map_err(|e| format!("outfit {n}: {e}"))?;
        if violating {
            ensure(before > 0, || format!("outfit {n}: injection produced no violation"))?;
            injected += before;
            let fixed_layers: Vec<Layer> = cats
                .iter()
                .zip(&fixed)
                .map(|(&category, points)| Layer { category, points })
                .collect();
            let left = check_coordination(&fixed_layers);
            ensure(left.is_empty(), || format!("outfit {n}: {} violations after one fix", left.len()))?;
            let after = oracle_outside(&cats.iter().copied().zip(fixed.iter()).collect::<Vec<_>>());
            ensure(after == 0, || format!("outfit {n}: oracle finds {after} points outside"))?;
        } else {
            for (k, l) in fixed.iter().zip(&layers) {
                ensure(k == l.points, || format!("outfit {n}: clean outfit changed"))?;
            }
        }
    }
    Ok(format!(
        "50 violating outfits ({injected} points outside) fixed to empty check; 50 clean outfits unchanged"
    ))
}

fn coat_outfit(seed: u64) -> Outfit {
    let mut coat = garment(GarmentCategory::Outerwear, "coat", seed);
    coat.style = StyleVector::default().with_closure(Closure::Open);
    Outfit::new(
        scene_for(demo::pose()),
        vec![
            garment(GarmentCategory::Skirt, "skirt", seed + 1),
            garment(GarmentCategory::Top, "top", seed + 2),
            coat,
        ],
    )
}

fn interpolation_agreement() -> Check {
    let engine = Engine::default();
    let schema = default_schema();
    let split = schema.group_ids(PointGroup::SplitEdge);
    let outfit = coat_outfit(40);
    let steps = interpolate(&engine, &outfit, &shipped("open_wider"), 5).map_err(|e| e.to_string())?;
    ensure(steps.len() == 5, || format!("{} steps", steps.len()))?;
    let mut per_step = Vec::new();
    for s in &steps {
        let coat = &s.result.points[2];
        let mut worst = 0f64;
        for &id in &split {
            let p = coat.get(id).ok_or_else(|| format!("step {}: split point {id} absent", s.step))?;
            let d = boundary_distance(&s.result.warped[2].mask, p)
                .ok_or_else(|| format!("step {}: empty coat mask", s.step))?;
            worst = worst.max(d);
        }
        ensure(worst < 0.02, || format!("step {}: deviation {worst:.4}", s.step))?;
        per_step.push(format!("{worst:.4}"));
    }
    Ok(format!("split-edge deviation per step [{}] < 0.02", per_step.join(", ")))
}

fn untouched_preservation() -> Check {
    let engine = Engine::default();
    let outfit = coat_outfit(70);
    let before = engine.render(&outfit).map_err(|e| e.to_string())?;
    let mut edited = outfit.clone();
    edited.templates = vec![shipped("open_wider")];
    let after = engine.render(&edited).map_err(|e| e.to_string())?;
    ensure(before.points[..2] == after.points[..2], || "inner points changed".into())?;
    ensure(before.points[2] != after.points[2], || "the edit did not move the coat".into())?;
    let (ma, mb) = (&before.warped[2].mask, &after.warped[2].mask);
    let mut garment_px = 0;
    for (x, y, px) in after.draft().enumerate_pixels() {
        if ma.get(x, y) || mb.get(x, y) {
            continue;
        }
        ensure(px == before.draft().get_pixel(x, y), || format!("pixel ({x},{y}) differs"))?;
        if before.warped[..2].iter().any(|w| w.mask.get(x, y)) {
            garment_px += 1;
        }
    }
    ensure(garment_px > 1000, || format!("only {garment_px} visible top/bottom pixels compared"))?;
    Ok(format!("{garment_px} visible skirt/top pixels outside the coat bit-identical"))
}

fn rect(layout: &mut SemanticLayout, x0: u32, y0: u32, w: u32, h: u32, class: LayoutClass) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            layout.set(x, y, class);
        }
    }
}

fn labeler_agreement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dims = Dims::new(256, 384);
    let (w, h) = (dims.width as f64, dims.height as f64);
    let thresholds = ClosureThresholds::default();
    let mut agree = 0;
    for n in 0..100 {
        let mut layout = SemanticLayout::new(dims);
        rect(&mut layout, 96, 60, 64, 200, LayoutClass::Top);
        let want = if n % 2 == 0 {
            // Two panels, each 6-12% of the canvas, a gap of top between.
            let (w1, w2) = ((rng.gen_range(0.14..0.2) * w) as u32, (rng.gen_range(0.14..0.2) * w) as u32);
            let (h1, h2) = ((rng.gen_range(0.45..0.6) * h) as u32, (rng.gen_range(0.45..0.6) * h) as u32);
            let gap = rng.gen_range(3..20);
            let x0 = rng.gen_range(10..(256 - w1 - gap - w2 - 10));
            rect(&mut layout, x0, 40, w1, h1, LayoutClass::Outerwear);
            rect(&mut layout, x0 + w1 + gap, 40, w2, h2, LayoutClass::Outerwear);
            Closure::Open
        } else {
            let (bw, bh) = ((rng.gen_range(0.35..0.6) * w) as u32, (rng.gen_range(0.5..0.7) * h) as u32);
            rect(&mut layout, 20, 30, bw, bh, LayoutClass::Outerwear);
            match n % 6 {
                // A detached fragment under 2% of the canvas.
                3 => rect(&mut layout, 20 + bw + 5, 30, 10, rng.gen_range(10..60), LayoutClass::Outerwear),
                // A second region, but at most 40% the size of the first.
                5 => {
                    let small = (bw * bh) as f64 * rng.gen_range(0.15..0.4);
                    let sh = (small / 20.0) as u32;
                    rect(&mut layout, 20 + bw + 5, 30, 20, sh.min(300), LayoutClass::Outerwear)
                }
                _ => {}
            }
            Closure::Closed
        };
        let got = label_closure(&layout, &thresholds).map_err(|e| e.to_string())?;
        if got.closure == Some(want) {
            agree += 1;
        }
    }
    ensure(agree == 100, || format!("closure {agree}/100"))?;

    let schema = default_schema();
    let hem = schema.group_ids(PointGroup::Hem);
    let mut tuck_agree = 0;
    for n in 0..100 {
        let waist = rng.gen_range(0.45..0.6);
        let pose = demo::pose().map_joints(|p| p);
        let mut pose = pose;
        for j in [Joint::LeftHip, Joint::RightHip] {
            pose.joints[j.index()].position.y = waist;
        }
        let mut k = ControlPointSet::for_category(schema, GarmentCategory::Top);
        let want = [Tuck::FullTuck, Tuck::Untuck, Tuck::HalfTuck][n % 3];
        let tucked = rng.gen_range(0..hem.len());
        for (j, &id) in hem.iter().enumerate() {
            let above = match want {
                Tuck::FullTuck => true,
                Tuck::Untuck => false,
                _ => j == tucked || (j != (tucked + 1) % hem.len() && rng.gen_bool(0.5)),
            };
            let y = if above {
                waist - rng.gen_range(0.0..0.08)
            } else {
                waist + rng.gen_range(0.03..0.15)
            };
            k.coords[id].y = y;
        }
        let got = label_tuck(schema, &k, &pose).map_err(|e| e.to_string())?;
        if got.tuck == Some(want) {
            tuck_agree += 1;
        }
    }
    ensure(tuck_agree == 100, || format!("tuck {tuck_agree}/100"))?;
    Ok("closure 100/100, tuck 100/100".into())
}

/// 1-based line and column of byte offset `at`.
fn line_col(text: &str, at: usize) -> (usize, usize) {
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().unwrap().chars().count() + 1;
    (line, col)
}

fn dsl_suite() -> Check {
    let schema = default_schema();
    let golden = workspace().join("crates/core/tests/golden");
    let files = dsl::template_files(&workspace().join("templates")).map_err(|e| e.to_string())?;
    for path in &files {
        let stem = path.file_stem().unwrap().to_string_lossy();
        let want = std::fs::read_to_string(golden.join(format!("{stem}.txt"))).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let got: Vec<String> = parse_templates(&text, schema)
            .map_err(|e| format!("{}: {e}", path.display()))?
            .iter()
            .map(print_template)
            .collect();
        ensure(got.join("\n") == want, || format!("{stem}: differs from golden"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 0..100 {
        let t = random_template(&mut rng, schema);
        let text = print_template(&t);
        let back = parse_template(&text, schema).map_err(|e| format!("fuzz {n}: {e}\n{text}"))?;
        ensure(back == t, || format!("fuzz {n}: round trip differs\n{text}"))?;
    }

    // Break fuzzed templates with one bad statement and compare the reported
    // position with where the offending token sits.
    let mut lint_cases = 0;
    for n in 0..100 {
        let t = random_template(&mut rng, schema);
        let cat = t.selector.categories()[0];
        let foreign = schema
            .points()
            .iter()
            .find(|p| !p.applies_to(cat))
            .map(|p| p.name.clone())
            .unwrap();
        let (stmt, token) = match n % 3 {
            0 => ("offset points(no_such_point) by (0, 0);".to_string(), "no_such_point".to_string()),
            1 => ("set style tuck = sideways;".to_string(), "sideways".to_string()),
            _ => (format!("disable points({foreign});"), foreign),
        };
        let text = print_template(&t);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let at = rng.gen_range(1..lines.len());
        let indent = " ".repeat(rng.gen_range(0..9));
        lines.insert(at, format!("{indent}{stmt}"));
        let broken = lines.join("\n");
        let line_start: usize = lines[..at].iter().map(|l| l.len() + 1).sum();
        let offset = line_start + lines[at].find(&token).unwrap();
        let want = line_col(&broken, offset);
        let e = parse_template(&broken, schema).err().ok_or_else(|| format!("lint {n}: accepted\n{broken}"))?;
        ensure(e.kind == ErrorKind::Lint, || format!("lint {n}: {e}"))?;
        ensure((e.pos.line, e.pos.column) == want, || {
            format!("lint {n}: reported {}:{}, token at {}:{}\n{broken}", e.pos.line, e.pos.column, want.0, want.1)
        })?;
        lint_cases += 1;
    }
    Ok(format!(
        "{} golden files match, 100 fuzz round trips, {lint_cases} lint errors at the offending token",
        files.len()
    ))
}

fn cli_render() -> Check {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = workspace().join("assets/demo/outfit.toml");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_drape"))
        .env("RAYON_NUM_THREADS", "1")
        .env("RUST_LOG", "warn")
        .args(["render", "--outfit"])
        .arg(&spec)
        .arg("--out")
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(status.status.success(), || {
        format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
    })?;
    let layout = SemanticLayout::load(&out.path().join("layout.png")).map_err(|e| e.to_string())?;
    ensure(layout.dims() == Dims::new(512, 768), || "layout is not 512x768".into())?;
    let draft = image_dims(&out.path().join("draft.png"))?;
    ensure(draft == (512, 768), || format!("draft is {draft:?}"))?;
    let finals = std::fs::read_dir(out.path().join("points"))
        .map_err(|e| e.to_string())?
        .filter(|e| e.as_ref().is_ok_and(|e| e.file_name().to_string_lossy().ends_with(".final.toml")))
        .count();
    ensure(finals == 3, || format!("{finals} final point files"))?;
    let reports: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("reports.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure(reports["garments"].as_array().map(Vec::len) == Some(3), || "reports.json lacks 3 garments".into())?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:?}"))?;
    Ok(format!("3-garment demo at 512x768 in {elapsed:.2?} on one thread; draft, layout, points, reports written"))
}

fn image_dims(path: &Path) -> Result<(u32, u32), String> {
    let img = drape_core::raster::load_rgba(path).map_err(|e| e.to_string())?;
    Ok(img.dimensions())
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("tps correctness", tps_suite),
        ("structural-loss isometry", isometry),
        ("edit instance-independence", instance_independence),
        ("split/merge partition", split_partition),
        ("coordination fixpoint", coordination_fixpoint),
        ("pipeline/point agreement", interpolation_agreement),
        ("untouched-garment preservation", untouched_preservation),
        ("style labeler agreement", labeler_agreement),
        ("dsl goldens, round trips, lint positions", dsl_suite),
        ("cli end-to-end render", cli_render),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
