use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use forge_core::composite::Kernel;
use forge_core::fixture::{write_fixture, HEIGHT, WIDTH};
use forge_core::geometry::dilate;
use forge_core::model::{
    load_gray16, load_manifest, load_mask8, normalize, save_manifest, save_mask8, DatasetManifest,
    MaskGrid, Modality, SampleEntry,
};
use forge_core::pipeline::{
    output_relpath, Background, BackgroundAssignment, SynthesisJob, SynthesisParams,
};
use forge_core::translation::{Mode, StubBackend};
use forge_core::Execution;

fn assignment(manifest: &DatasetManifest, bg_dir: &Path) -> BackgroundAssignment {
    let mut a = BackgroundAssignment::default();
    for m in Modality::ALL {
        let path = bg_dir.join(m.as_str()).join("bg1.png");
        let meta = manifest.meta(m).unwrap();
        let frame = normalize(&load_gray16(&path).unwrap(), meta).unwrap();
        a.set_default(
            m,
            Arc::new(Background {
                id: "bg1".into(),
                path,
                frame,
            }),
        );
    }
    a
}

fn run(
    manifest: &DatasetManifest,
    bg: &BackgroundAssignment,
    out: &Path,
    exec: Execution,
) -> forge_core::pipeline::SynthesisReport {
    let metas: BTreeMap<_, _> = manifest.modality_meta.clone();
    let backend = StubBackend::new(Mode::Residual);
    SynthesisJob {
        manifest,
        modalities: Modality::ALL.to_vec(),
        backgrounds: bg,
        metas: &metas,
        backend: &backend,
        params: SynthesisParams::default(),
        out_dir: out,
    }
    .run(exec)
    .unwrap()
}

#[test]
fn fixture_synthesis_is_deterministic_and_skips_empty_masks() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(&dir.path().join("fx"), 6).unwrap();
    let mut manifest = load_manifest(&fx.manifest).unwrap();
    save_mask8(
        &MaskGrid::empty(WIDTH, HEIGHT),
        fx.root.join("mask/blank.png"),
    )
    .unwrap();
    let mut blank = SampleEntry::new("blank", "rgb/s000.png");
    blank.mask = Some("mask/blank.png".into());
    manifest.samples.push(blank);
    save_manifest(&manifest, &fx.manifest).unwrap();
    let manifest = load_manifest(&fx.manifest).unwrap();
    let bg = assignment(&manifest, &fx.bg_dir);

    let seq_dir = dir.path().join("seq");
    let par_dir = dir.path().join("par");
    let seq = run(&manifest, &bg, &seq_dir, Execution::Sequential);
    let par = run(&manifest, &bg, &par_dir, Execution::Parallel);

    assert_eq!(seq.written, 12);
    assert_eq!(seq.failures.len(), 1);
    assert_eq!(seq.failures[0].id, "blank");
    assert_eq!(seq.manifest.samples.len(), 6);
    assert_eq!(seq.manifest.to_json(), par.manifest.to_json());

    for s in &seq.manifest.samples {
        assert!(s.rgb.is_absolute());
        let mask = load_mask8(s.mask.as_ref().unwrap()).unwrap();
        let outside = dilate(&mask, Kernel::default().width, Kernel::default().height);
        for m in Modality::ALL {
            let rel = output_relpath(m, &s.id);
            assert_eq!(s.modality(m), Some(rel.as_path()));
            let a = std::fs::read(seq_dir.join(&rel)).unwrap();
            assert_eq!(a, std::fs::read(par_dir.join(&rel)).unwrap());

            let out = load_gray16(seq_dir.join(&rel)).unwrap();
            let src = load_gray16(&bg.get(&s.id, m).unwrap().path).unwrap();
            for (i, (&o, &b)) in out.data().iter().zip(src.data()).enumerate() {
                if !outside.bits()[i] {
                    assert_eq!(o, b, "{} {m} pixel {i}", s.id);
                }
            }
        }
    }
}
