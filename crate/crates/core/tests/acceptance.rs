//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
//! Exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};
use vislens_core::agent::{run_sample, AgentConfig, AnswerToken, RoundRecord, SampleInput, Transcript};
use vislens_core::harness::{self, load_manifest, run_batch, score, RunConfig, ScoreReport};
use vislens_core::model::live::network_attempts;
use vislens_core::model::replay::{RecordingFactory, ReplayFactory};
use vislens_core::model::scripted::{PolicyKind, ScriptedPolicy};
use vislens_core::model::{BackendFactory, ScriptedFactory};
use vislens_core::raster::{Raster, Rgb};
use vislens_core::registry::{Registry, ResourceId};
use vislens_core::routing::TaskKind;
use vislens_core::stimulus::{self, Orientation, Polarity, StimulusKind, StimulusSpec};
use vislens_core::tools::{self, Point};

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_call(rng: &mut impl Rng, ids: &[ResourceId], w: i64, h: i64) -> (&'static str, Value) {
    let src = ids.choose(rng).unwrap().to_string();
    // mostly in-bounds coordinates, sometimes off-canvas or nonsense
    let mut coord = |extent: i64| -> i64 { rng.random_range(-8..extent + 8) };
    let (x0, y0, x1, y1) = (coord(w), coord(h), coord(w), coord(h));
    let color = format!("#{:06X}", rng.random_range(0..0x100_0000u32));
    let tool = *[
        "draw_line",
        "draw_rectangle",
        "draw_circle",
        "crop",
        "compare_crops",
        "overlay_grid",
        "extract_channel",
        "sample_color",
        "isolate_color",
        "blur",
        "no_such_tool",
    ]
    .choose(rng)
    .unwrap();
    let args = match tool {
        "draw_line" | "draw_rectangle" => json!({
            "source": src, "x0": x0, "y0": y0, "x1": x1, "y1": y1,
            "color": color, "thickness": rng.random_range(0..5),
        }),
        "draw_circle" => json!({
            "source": src, "cx": x0, "cy": y0, "radius": rng.random_range(-1..20), "color": color,
        }),
        "crop" => json!({ "source": src, "x0": x0, "y0": y0, "x1": x1, "y1": y1 }),
        "compare_crops" => {
            let other = ids.choose(rng).unwrap().to_string();
            json!({
                "source_a": src, "a_x0": x0, "a_y0": y0, "a_x1": x1, "a_y1": y1,
                "source_b": other, "b_x0": 0, "b_y0": 0, "b_x1": x1, "b_y1": y1,
            })
        }
        "overlay_grid" => json!({ "source": src, "rows": rng.random_range(0..6), "cols": rng.random_range(0..6) }),
        "extract_channel" => json!({ "source": src, "channel": (["R", "G", "B", "X"].choose(rng).unwrap()) }),
        "sample_color" => json!({ "source": src, "x": x0, "y": y0, "window": rng.random_range(0..6) }),
        "isolate_color" => json!({
            "source": src,
            "family": (["red", "green", "blue", "magenta", "teal"].choose(rng).unwrap()),
            "hue_tolerance": rng.random_range(0.0..60.0),
        }),
        "blur" => json!({ "source": src, "radius": rng.random_range(0..4) }),
        _ => json!({ "source": "img_999" }),
    };
    (tool, args)
}

fn criterion_1() -> Outcome {
    let mut rng = rng(1);
    let (mut calls, mut created) = (0usize, 0usize);
    for seq in 0..1000 {
        let mut reg = Registry::new(random_raster(&mut rng, 64));
        let mut hashes = vec![reg.get(ResourceId::Original).unwrap().raster.content_hash()];
        for _ in 0..rng.random_range(1..=20) {
            let ids = reg.list_ids();
            let (w, h) = {
                let r = &reg.latest().raster;
                (i64::from(r.width()), i64::from(r.height()))
            };
            let (tool, args) = random_call(&mut rng, &ids, w, h);
            let before = reg.len();
            let result = tools::execute(&mut reg, tool, &args);
            calls += 1;
            match result {
                Ok(out) => {
                    created += 1;
                    check(reg.len() == before + 1, || format!("seq {seq}: size did not grow by one"))?;
                    check(out.new_id == ResourceId::Derived(before as u32), || {
                        format!("seq {seq}: expected img_{before:03}, got {}", out.new_id)
                    })?;
                    hashes.push(reg.get(out.new_id).unwrap().raster.content_hash());
                }
                Err(_) => check(reg.len() == before, || format!("seq {seq}: failed {tool} changed the registry"))?,
            }
            let expected: Vec<ResourceId> = std::iter::once(ResourceId::Original)
                .chain((1..reg.len() as u32).map(ResourceId::Derived))
                .collect();
            check(reg.list_ids() == expected, || format!("seq {seq}: ids not gapless"))?;
            for (i, res) in reg.iter().enumerate() {
                let now = res.raster.content_hash();
                check(now == hashes[i] && res.content_hash() == hashes[i], || {
                    format!("seq {seq}: {} changed after {tool}", res.id)
                })?;
            }
        }
    }
    Ok(format!("1000 sequences, {calls} calls ({created} allocations), 0 violations"))
}

fn registry_with(raster: &Raster) -> Registry {
    Registry::new(raster.clone())
}

fn run_tool(raster: &Raster, tool: &str, args: Value) -> Result<Raster, tools::ToolError> {
    let mut reg = registry_with(raster);
    let out = tools::execute(&mut reg, tool, &args)?;
    Ok(reg.get(out.new_id).unwrap().raster.as_ref().clone())
}

fn criterion_2() -> Outcome {
    let mut rng = rng(2);
    let mut mismatches = Vec::new();
    let mut tally = BTreeMap::new();
    let mut compare = |name: &str, case: usize, got: Option<Raster>, want: Option<Raster>| {
        *tally.entry(name.to_string()).or_insert(0) += 1;
        if got != want {
            mismatches.push(format!("{name} case {case}"));
        }
    };
    for case in 0..200 {
        let src = random_raster(&mut rng, 64);
        let (w, h) = (i64::from(src.width()), i64::from(src.height()));
        let (x0, y0, x1, y1) = (
            rng.random_range(-4..w + 4),
            rng.random_range(-4..h + 4),
            rng.random_range(-4..w + 4),
            rng.random_range(-4..h + 4),
        );
        let got = run_tool(&src, "crop", json!({"source":"original","x0":x0,"y0":y0,"x1":x1,"y1":y1})).ok();
        compare("crop", case, got, naive_crop(&src, x0, y0, x1, y1));

        let c = rng.random_range(0..3usize);
        let got = run_tool(&src, "extract_channel", json!({"source":"original","channel":(["R","G","B"][c])})).ok();
        compare("extract_channel", case, got, Some(naive_channel(&src, c)));

        let (rows, cols) = (rng.random_range(1..=h.min(9)), rng.random_range(1..=w.min(9)));
        let color = [rng.random(), rng.random(), rng.random()];
        let hex = format!("#{:02X}{:02X}{:02X}", color[0], color[1], color[2]);
        let got = run_tool(&src, "overlay_grid", json!({"source":"original","rows":rows,"cols":cols,"color":hex})).ok();
        compare("overlay_grid", case, got, Some(naive_grid(&src, rows, cols, color)));

        let b = (
            rng.random_range(-4..w + 4),
            rng.random_range(-4..h + 4),
            rng.random_range(-4..w + 4),
            rng.random_range(-4..h + 4),
        );
        let mut reg = registry_with(&src);
        let got = tools::execute(
            &mut reg,
            "compare_crops",
            &json!({
                "source_a":"original","a_x0":x0,"a_y0":y0,"a_x1":x1,"a_y1":y1,
                "source_b":"original","b_x0":b.0,"b_y0":b.1,"b_x1":b.2,"b_y1":b.3,
            }),
        )
        .ok()
        .map(|o| reg.get(o.new_id).unwrap().raster.as_ref().clone());
        let want = match (naive_crop(&src, x0, y0, x1, y1), naive_crop(&src, b.0, b.1, b.2, b.3)) {
            (Some(a), Some(b)) => Some(naive_side_by_side(&a, &b)),
            _ => None,
        };
        compare("compare_crops", case, got, want);

        let thickness = rng.random_range(1..=4i64);
        let p0 = (rng.random_range(-10..w + 10), rng.random_range(-10..h + 10));
        let p1 = (rng.random_range(-10..w + 10), rng.random_range(-10..h + 10));
        let (shape, args, want) = match case % 3 {
            0 => (
                "draw_line",
                json!({"source":"original","x0":p0.0,"y0":p0.1,"x1":p1.0,"y1":p1.1,"color":hex,"thickness":thickness}),
                naive_stroke(&src, |x, y| on_line(p0, p1, x, y), color, thickness, thickness),
            ),
            1 => (
                "draw_rectangle",
                json!({"source":"original","x0":p0.0,"y0":p0.1,"x1":p1.0,"y1":p1.1,"color":hex,"thickness":thickness}),
                naive_stroke(&src, |x, y| on_rect_border(p0, p1, x, y), color, thickness, thickness),
            ),
            _ => {
                let r = rng.random_range(0..30i64);
                (
                    "draw_circle",
                    json!({"source":"original","cx":p0.0,"cy":p0.1,"radius":r,"color":hex,"thickness":thickness}),
                    naive_stroke(&src, |x, y| on_circle(p0, r, x, y), color, thickness, thickness),
                )
            }
        };
        let got = run_tool(&src, shape, args).ok();
        compare("draw_primitive", case, got, Some(want));

        let small = random_raster(&mut rng, 32);
        let radius = rng.random_range(1..=3i64);
        let got = run_tool(&small, "blur", json!({"source":"original","radius":radius})).ok();
        compare("blur", case, got, Some(naive_blur(&small, radius)));
    }
    let summary = tally.iter().map(|(k, v)| format!("{k} {v}")).collect::<Vec<_>>().join(", ");
    if mismatches.is_empty() {
        Ok(format!("0 mismatches ({summary})"))
    } else {
        Err(format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))
    }
}

fn criterion_3() -> Outcome {
    let policy = ScriptedPolicy::new(PolicyKind::NeverFinalize, TaskKind::TaskI, None).map_err(|e| e.to_string())?;
    let input = SampleInput {
        sample_id: "limits".into(),
        task: TaskKind::TaskI,
        question: "Is the line straight?".into(),
        options: None,
    };
    let image = Raster::filled(32, 32, Rgb::WHITE).unwrap();
    let (t, reg) = run_sample(&AgentConfig::default(), &policy, &input, image).map_err(|e| e.to_string())?;
    check(t.rounds.len() == 10, || format!("{} main rounds", t.rounds.len()))?;
    check(t.rescue_rounds.len() == 3, || format!("{} rescue rounds", t.rescue_rounds.len()))?;
    check(t.used_rescue && t.used_fallback, || "fallback not used".into())?;
    check(t.final_answer.answer == AnswerToken::No, || format!("final {}", t.final_answer.answer))?;
    check(reg.len() == 14, || format!("registry size {}", reg.len()))?;
    Ok("10 main rounds + 3 rescue rounds, fallback No, used_fallback=true".into())
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    emit_balanced_set(&root.join("set"));
    Fixture { _dir: dir, root }
}

fn scripted(kind: PolicyKind, set: &Path) -> ScriptedFactory {
    let probes = stimulus::load_probes(&set.join(stimulus::PROBES_FILE)).unwrap();
    ScriptedFactory {
        kind,
        probes: probes.into_iter().collect(),
    }
}

fn run_into(fx: &Fixture, factory: &dyn BackendFactory, name: &str, workers: usize) -> Result<(ScoreReport, Vec<u8>), String> {
    let manifest = load_manifest(&fx.root.join("set").join(stimulus::MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(fx.root.join(name));
    cfg.workers = workers;
    cfg.agent.settings.model_name = factory.describe();
    let summary = run_batch(&manifest, factory, &cfg).map_err(|e| e.to_string())?;
    let report = score(&summary.results, &manifest).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&summary.results_path).map_err(|e| e.to_string())?;
    Ok((report, bytes))
}

fn criterion_4(fx: &Fixture) -> Outcome {
    let before = network_attempts();
    let start = Instant::now();
    let factory = scripted(PolicyKind::Oracle, &fx.root.join("set"));
    let (report, first) = run_into(fx, &factory, "oracle_a", 4)?;
    let elapsed = start.elapsed();
    let (_, second) = run_into(fx, &factory, "oracle_b", 4)?;
    check(report.n_total == 60 && report.n_positive == 30 && report.n_negative == 30, || {
        format!("counts {}/{}/{}", report.n_total, report.n_positive, report.n_negative)
    })?;
    check(
        report.overall_accuracy == Some(1.0)
            && report.positive_accuracy == Some(1.0)
            && report.negative_accuracy == Some(1.0),
        || format!("accuracies {:?}", (report.overall_accuracy, report.positive_accuracy, report.negative_accuracy)),
    )?;
    check(first == second, || "rerun produced different results".into())?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let attempts = network_attempts() - before;
    check(attempts == 0, || format!("{attempts} network attempts"))?;
    Ok(format!(
        "60 samples, accuracy 1.0/1.0/1.0, rerun identical, {:.1}s, 0 network attempts",
        elapsed.as_secs_f64()
    ))
}

fn criterion_5(fx: &Fixture) -> Outcome {
    let factory = scripted(PolicyKind::AlwaysPositive, &fx.root.join("set"));
    let (r, _) = run_into(fx, &factory, "positive", 4)?;
    check(
        r.positive_accuracy == Some(1.0) && r.negative_accuracy == Some(0.0) && r.overall_accuracy == Some(0.5),
        || format!("got {:?}", (r.positive_accuracy, r.negative_accuracy, r.overall_accuracy)),
    )?;
    Ok("positive 1.0, negative 0.0, overall 0.5".into())
}

fn oracle_answer(sample: &stimulus::GeneratedSample) -> Result<AnswerToken, String> {
    let policy =
        ScriptedPolicy::new(PolicyKind::Oracle, sample.task, Some(sample.probes.clone())).map_err(|e| e.to_string())?;
    let input = SampleInput {
        sample_id: sample.spec.sample_id(),
        task: sample.task,
        question: sample.question.clone(),
        options: sample.options.clone(),
    };
    let (t, _) = run_sample(&AgentConfig::default(), &policy, &input, sample.raster.clone()).map_err(|e| e.to_string())?;
    Ok(t.final_answer.answer)
}

fn criterion_6() -> Outcome {
    for seed in 0..20 {
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let spec = StimulusSpec::new(StimulusKind::BandStack, polarity, seed);
            let v = stimulus::generate(&spec.with_orientation(Orientation::Vertical)).map_err(|e| e.to_string())?;
            let h = stimulus::generate(&spec.with_orientation(Orientation::Horizontal)).map_err(|e| e.to_string())?;
            check(v.raster == h.raster.transpose(), || format!("seed {seed}: not transposes"))?;
            let (av, ah) = (oracle_answer(&v)?, oracle_answer(&h)?);
            check(av == ah && av == v.label, || format!("seed {seed} {polarity:?}: {av} vs {ah}, label {}", v.label))?;
        }
    }
    Ok("20 seeds x 2 polarities: exact transposes, identical oracle answers".into())
}

fn transcript_with(id: usize, task: TaskKind, tools: &[&str]) -> Transcript {
    Transcript {
        sample_id: format!("t{id:02}"),
        task,
        prompt_version: "test".into(),
        rounds: tools
            .iter()
            .enumerate()
            .map(|(i, t)| RoundRecord {
                round_index: i,
                tool_calls: vec![call(t, json!({}))],
                outcomes: vec![vislens_core::agent::CallOutcome::Error { message: "x".into() }],
                model_raw: String::new(),
            })
            .collect(),
        rescue_rounds: Vec::new(),
        final_answer: AgentConfig::default().fallback_for(task).clone(),
        used_rescue: false,
        used_fallback: false,
        model_name: "test".into(),
        notes: Vec::new(),
    }
}

fn criterion_7() -> Outcome {
    use TaskKind::TaskI;
    let sets: [&[&str]; 10] = [
        &["compare_crops", "compare_crops", "draw_line"],
        &["compare_crops"],
        &["crop", "compare_crops"],
        &["draw_line", "draw_line", "draw_line"],
        &[],
        &["crop"],
        &["compare_crops", "crop", "draw_rectangle"],
        &["draw_circle", "show_resource"],
        &["compare_crops", "sample_color"],
        &["crop", "crop", "crop", "compare_crops"],
    ];
    let transcripts: Vec<Transcript> = sets.iter().enumerate().map(|(i, s)| transcript_with(i, TaskI, s)).collect();
    let report = harness::tool_usage_stats(&transcripts).map_err(|e| e.to_string())?;
    // hand counts per tool over the ten sets above
    let expected = [
        ("compare_crops", 6),
        ("crop", 4),
        ("draw_line", 2),
        ("draw_circle", 1),
        ("draw_rectangle", 1),
    ];
    let table = &report.per_task["1"];
    check(table.n_samples == 10, || format!("{} samples", table.n_samples))?;
    let got: Vec<(&str, usize, f64)> = table.tools.iter().map(|f| (f.tool.as_str(), f.samples, f.fraction)).collect();
    let want: Vec<(&str, usize, f64)> = expected.iter().map(|&(t, n)| (t, n, n as f64 / 10.0)).collect();
    check(got == want, || format!("got {got:?}"))?;
    Ok("fractions 0.6/0.4/0.2/0.1/0.1 match hand counts".into())
}

fn criterion_8() -> Outcome {
    let image = Raster::from_fn(120, 64, |x, _| if x < 60 { Rgb::gray(0x8F) } else { Rgb::gray(0x90) }).unwrap();
    let near = [Point { x: 58, y: 32 }, Point { x: 62, y: 32 }];
    let centers = [Point { x: 30, y: 32 }, Point { x: 90, y: 32 }];
    let probes: Vec<Point> = near.iter().chain(&centers).copied().collect();
    let report = harness::compression_sweep(&image, &probes, &[30, 50, 70]).map_err(|e| e.to_string())?;
    check(report.codec.chroma_subsampling == "4:2:0", || "codec pins missing".into())?;
    let near_hit = report
        .levels
        .iter()
        .flat_map(|l| l.probes.iter().take(2).map(move |p| (l.quality, p)))
        .find(|(_, p)| p.delta.iter().any(|d| d.abs() >= 1));
    let (q, p) = near_hit.ok_or_else(|| "no probe near the interface moved".to_string())?;
    for level in report.levels.iter().filter(|l| l.quality >= 70) {
        for p in &level.probes[2..] {
            check(p.delta.iter().all(|d| d.abs() <= 2), || {
                format!("center probe ({},{}) moved {:?} at q{}", p.point.x, p.point.y, p.delta, level.quality)
            })?;
        }
    }
    Ok(format!(
        "q{q} probe ({},{}) delta {:?}; center probes within 2 levels at q>=70",
        p.point.x, p.point.y, p.delta
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let sample = entry.unwrap().path();
        if !sample.is_dir() {
            continue;
        }
        for name in ["transcript.json", "registry.json"] {
            let p = sample.join(name);
            if let Ok(bytes) = std::fs::read(&p) {
                out.insert(format!("{}/{name}", sample.file_name().unwrap().to_string_lossy()), bytes);
            }
        }
    }
    out
}

fn criterion_9(fx: &Fixture) -> Outcome {
    let set = fx.root.join("set");
    let recorder = RecordingFactory {
        inner: Box::new(scripted(PolicyKind::Oracle, &set)),
        dir: fx.root.join("recorded"),
    };
    let (recorded_report, recorded_results) = run_into(fx, &recorder, "recorded", 4)?;
    let replay = ReplayFactory {
        dir: fx.root.join("recorded"),
    };
    let cfg_name = "replayed";
    let manifest = load_manifest(&set.join(stimulus::MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(fx.root.join(cfg_name));
    cfg.workers = 4;
    cfg.agent.settings.model_name = recorder.describe();
    let summary = run_batch(&manifest, &replay, &cfg).map_err(|e| e.to_string())?;
    let replayed_results = std::fs::read(&summary.results_path).map_err(|e| e.to_string())?;
    let (a, b) = (read_tree(&fx.root.join("recorded")), read_tree(&fx.root.join(cfg_name)));
    check(a.len() == 120 && a == b, || format!("replayed artifacts differ ({} vs {} files)", a.len(), b.len()))?;
    let strip = |bytes: &[u8]| String::from_utf8_lossy(bytes).lines().skip(1).collect::<Vec<_>>().join("\n");
    check(strip(&recorded_results) == strip(&replayed_results), || "result records differ".into())?;
    check(recorded_report.overall_accuracy == Some(1.0), || "recorded run not perfect".into())?;

    // edit one question and replay again
    let text = std::fs::read_to_string(set.join(stimulus::MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let victim = lines[0]["sample_id"].as_str().unwrap().to_string();
    lines[0]["question"] = json!(format!("{} (edited)", lines[0]["question"].as_str().unwrap()));
    let edited = set.join("edited.jsonl");
    let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&edited, body).map_err(|e| e.to_string())?;
    let manifest = load_manifest(&edited).map_err(|e| e.to_string())?;
    cfg.out_dir = fx.root.join("diverged");
    run_batch(&manifest, &replay, &cfg).map_err(|e| e.to_string())?;
    let t: Transcript = serde_json::from_slice(
        &std::fs::read(fx.root.join("diverged").join(&victim).join("transcript.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    check(
        t.notes.first().is_some_and(|n| n.contains("replay diverged at round 1")),
        || format!("notes: {:?}", t.notes),
    )?;
    Ok(format!("60 transcripts + registries byte-identical on replay; edited question on {victim} diverges at round 1"))
}

fn main() {
    let started = Instant::now();
    let fx = fixture();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 registry immutability", Box::new(criterion_1)),
        ("2 raster oracle equivalence", Box::new(criterion_2)),
        ("3 round-limit enforcement", Box::new(criterion_3)),
        ("4 end-to-end oracle run", Box::new(|| criterion_4(&fx))),
        ("5 positive-bias reproduction", Box::new(|| criterion_5(&fx))),
        ("6 orientation generalization", Box::new(criterion_6)),
        ("7 tool-usage analytics", Box::new(criterion_7)),
        ("8 compression sensitivity", Box::new(criterion_8)),
        ("9 replay determinism", Box::new(|| criterion_9(&fx))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
