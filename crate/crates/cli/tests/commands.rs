use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use uv3_cli::*;
use uv3_core::io;
use uv3_core::shapes;
use uv3_core::Mesh;
use uv3_nn::{DenoiserConfig, DenoiserParams};

fn write_mesh(dir: &Path, name: &str, mesh: &Mesh, header: &str) -> PathBuf {
    let mut buf = header.as_bytes().to_vec();
    io::write_obj(&mut buf, mesh).unwrap();
    let path = dir.join(name);
    fs::write(&path, buf).unwrap();
    path
}

fn small() -> PipelineConfig {
    PipelineConfig {
        k: 24,
        target: 400,
        fps: 16,
        n_sihks: 8,
        steps: 20,
        knn: 10,
        seed: 7,
        ..PipelineConfig::default()
    }
}

fn tiny_model() -> DenoiserConfig {
    DenoiserConfig {
        width: 8,
        mlp_width: 8,
        levels: 2,
        groups: 2,
        heads: 2,
        head_dim: 4,
        time_dim: 8,
        time_hidden: 8,
        k_eigs: 8,
        n_sihks: 8,
        cond_hidden: 6,
        cond_dim: 4,
        fps_count: 12,
        ..DenoiserConfig::default()
    }
}

#[test]
fn config_validation() {
    assert!(PipelineConfig::default().validate().is_ok());
    for bad in [
        PipelineConfig { k: 0, ..small() },
        PipelineConfig { rho: 1.5, ..small() },
        PipelineConfig { beta_end: 1.0, ..small() },
        PipelineConfig { beta_start: 0.3, beta_end: 0.2, ..small() },
    ] {
        let e = bad.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
    }
    let prov = small().provenance("sample");
    assert!(prov.contains(&("command".to_string(), "sample".to_string())));
    assert!(prov.contains(&("rho".to_string(), "0.05".to_string())));
    assert!(prov.contains(&("seed".to_string(), "7".to_string())));
}

#[test]
fn precompute_round_trips_and_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let sphere = write_mesh(dir.path(), "sphere.obj", &shapes::icosphere(2, 1.0), "");
    let prefix = dir.path().join("sphere");
    let rep = precompute(&sphere, &prefix, &cfg, false).unwrap();
    assert_eq!(rep.stats.connected_component_count, 1);
    assert_eq!(rep.zero_eigenvalues, 1);
    assert_eq!(rep.files.len(), 2);

    let spath = artifact_path(&prefix, "mixed", "uv3s");
    let bytes = fs::read(&spath).unwrap();
    let (basis, prov) = io::decode_basis(&bytes).unwrap();
    assert_eq!(basis.k(), 24);
    assert_eq!(io::encode_basis(&basis, &prov), bytes);
    let lbytes = fs::read(artifact_path(&prefix, "mixed", "uv3l")).unwrap();
    let (op, prov) = io::decode_operator(&lbytes).unwrap();
    assert_eq!(io::encode_operator(&op, &prov).unwrap(), lbytes);

    let split = write_mesh(dir.path(), "split.obj", &shapes::sliced_sphere(2), "");
    let prefix = dir.path().join("split");
    let rep = precompute(&split, &prefix, &cfg, true).unwrap();
    assert_eq!(rep.stats.connected_component_count, 2);
    assert_eq!(rep.zero_eigenvalues, 1);
    assert_eq!(rep.files.len(), 6);
    let (mesh_only, _) = io::load_basis(&artifact_path(&prefix, "mesh", "uv3s")).unwrap();
    assert_eq!(zero_eigenvalue_count(&mesh_only), 2);
}

#[test]
fn zero_mixing_reproduces_the_mesh_operator() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_mesh(dir.path(), "m.obj", &shapes::icosphere(1, 1.0), "");
    let prefix = dir.path().join("m");
    precompute(&mesh, &prefix, &PipelineConfig { rho: 0.0, ..small() }, true).unwrap();
    let (mixed, _) = io::load_operator(&artifact_path(&prefix, "mixed", "uv3l")).unwrap();
    let (mesh_only, _) = io::load_operator(&artifact_path(&prefix, "mesh", "uv3l")).unwrap();
    assert_eq!(mixed, mesh_only);
}

#[test]
fn directory_fan_out() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    write_mesh(&input, "a.obj", &shapes::icosphere(1, 1.0), "");
    write_mesh(&input, "b.obj", &shapes::cube(), "");
    fs::write(input.join("broken.obj"), "v 0 0 0\nf 1 2 3\n").unwrap();
    fs::write(input.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("out");
    let results = precompute_dir(&input, &out, &PipelineConfig { k: 8, ..small() }, false, 2).unwrap();
    assert_eq!(results.len(), 3);
    let ok: Vec<_> = results.iter().filter(|(_, r)| r.is_ok()).map(|(p, _)| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(ok, ["a.obj", "b.obj"]);
    assert!(out.join("a.uv3s").exists() && out.join("b.uv3l").exists());
    assert_eq!(results[2].1.as_ref().unwrap_err().exit_code(), 2);
}

#[test]
fn sampling_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let sphere = write_mesh(dir.path(), "s.obj", &shapes::icosphere(3, 1.0), "");
    precompute(&sphere, &dir.path().join("s"), &cfg, false).unwrap();
    let spectra = dir.path().join("s.uv3s");
    let (a, b) = (dir.path().join("a.uv3t"), dir.path().join("b.uv3t"));
    let rep = sample(&sphere, &spectra, &a, &cfg).unwrap();
    assert!(rep.within_band(), "{} for {}", rep.count, rep.target);
    assert!(!rep.colored);
    sample(&sphere, &spectra, &b, &cfg).unwrap();
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let (samples, prov) = io::decode_samples(&bytes).unwrap();
    assert_eq!(samples.len(), rep.count);
    assert_eq!(samples.fps_indices.len(), cfg.fps);
    assert_eq!(samples.sihks_p.ncols(), cfg.n_sihks);
    assert_eq!(io::encode_samples(&samples, &prov).unwrap(), bytes);

    sample(&sphere, &spectra, &b, &PipelineConfig { seed: 8, ..cfg.clone() }).unwrap();
    assert_ne!(bytes, fs::read(&b).unwrap());
}

#[test]
fn sample_colors_follow_materials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { k: 16, target: 300, ..small() };
    fs::write(dir.path().join("plain.mtl"), "newmtl paint\nKd 0.2 0.4 0.6\n").unwrap();
    // a bare cube has too few vertices for the signature basis
    let cube = write_mesh(dir.path(), "cube.obj", &shapes::uv_sphere(6, 10, 1.0), "mtllib plain.mtl\nusemtl paint\n");
    precompute(&cube, &dir.path().join("cube"), &cfg, false).unwrap();
    let out = dir.path().join("cube.uv3t");
    assert!(sample(&cube, &dir.path().join("cube.uv3s"), &out, &cfg).unwrap().colored);
    let (s, _) = io::load_samples(&out).unwrap();
    let colors = s.colors.unwrap();
    for c in &colors {
        for (got, want) in c.iter().zip([0.2, 0.4, 0.6]) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    let sphere = uv3_nn::toy::two_tone_sphere(2);
    sphere.texture().unwrap().save_png(&dir.path().join("tex.png")).unwrap();
    fs::write(dir.path().join("tex.mtl"), "newmtl t\nKd 1 1 1\nmap_Kd tex.png\n").unwrap();
    let path = write_mesh(dir.path(), "tone.obj", &sphere, "mtllib tex.mtl\nusemtl t\n");
    precompute(&path, &dir.path().join("tone"), &cfg, false).unwrap();
    sample(&path, &dir.path().join("tone.uv3s"), &out, &cfg).unwrap();
    let (s, _) = io::load_samples(&out).unwrap();
    let north = uv3_nn::toy::TONE_NORTH;
    let near_north = s.colors.unwrap().iter().filter(|c| (0..3).all(|i| (c[i] - north[i]).abs() < 0.02)).count();
    assert!(near_north > s.points.len() / 3 && near_north < 2 * s.points.len() / 3, "{near_north}");
}

#[test]
fn diffuse_demo_separates_components_and_conserves_heat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { k: 32, ..small() };
    let mesh = write_mesh(dir.path(), "split.obj", &shapes::sliced_sphere(2), "");
    let opts = DiffuseOptions {
        source: 0,
        times: vec![0.001, 0.1, 10.0],
        spectra: None,
        width: 48,
        height: 32,
    };
    let rep = diffuse_demo(&mesh, &dir.path().join("frames"), &opts, &cfg).unwrap();
    assert_eq!(rep.frames.len(), 9);
    assert!(rep.conservation_error() < 1e-6, "{}", rep.conservation_error());
    let other = 1 - rep.component_of_source;
    for f in &rep.frames {
        assert!(f.image.exists());
        let leaked = f.per_component[other];
        match f.operator {
            "mesh" => assert!(leaked.abs() < 1e-9, "mesh h={} leaked {leaked}", f.h),
            "mixed" => assert!(leaked > 1e-6 || f.h < 0.01, "mixed h={} reached {leaked}", f.h),
            _ => {}
        }
    }
    let far = rep.frames.iter().find(|f| f.operator == "mixed" && f.h == 10.0).unwrap();
    assert!(far.per_component[other] > 1e-6);

    // reusing precomputed spectra agrees up to their f32 eigenvectors
    precompute(&mesh, &dir.path().join("split"), &cfg, true).unwrap();
    let cached = DiffuseOptions {
        spectra: Some(dir.path().join("split")),
        ..opts.clone()
    };
    let again = diffuse_demo(&mesh, &dir.path().join("frames2"), &cached, &cfg).unwrap();
    for (a, b) in rep.frames.iter().zip(&again.frames) {
        assert!((a.total - b.total).abs() < 1e-6, "{} {} {} {}", a.operator, a.h, a.total, b.total);
    }
    let bad = DiffuseOptions { source: 10_000, ..opts };
    assert_eq!(diffuse_demo(&mesh, dir.path(), &bad, &cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn generate_and_render_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { k: 16, target: 200, ..small() };
    let mesh_path = write_mesh(dir.path(), "s.obj", &shapes::icosphere(2, 1.0), "");
    precompute(&mesh_path, &dir.path().join("s"), &cfg, false).unwrap();
    let params_path = dir.path().join("p.uv3p");
    DenoiserParams::init(&tiny_model(), 1).unwrap().save(&params_path, &Vec::new()).unwrap();

    let spectra = dir.path().join("s.uv3s");
    let (a, b) = (dir.path().join("a.uv3t"), dir.path().join("b.uv3t"));
    let samples = generate(&mesh_path, &spectra, &params_path, &a, &cfg).unwrap();
    generate(&mesh_path, &spectra, &params_path, &b, &cfg).unwrap();
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let colors = samples.colors.as_ref().unwrap();
    assert_eq!(colors.len(), samples.len());
    assert!(colors.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    assert_eq!(samples.fps_indices.len(), tiny_model().fps_count);
    let (back, prov) = io::decode_samples(&bytes).unwrap();
    assert_eq!(io::encode_samples(&back, &prov).unwrap(), bytes);

    let opts = RenderOptions {
        width: 40,
        height: 30,
        views: 2,
        ..RenderOptions::default()
    };
    let out = dir.path().join("view.png");
    let first = render(&mesh_path, &a, &out, &opts, &cfg).unwrap();
    assert_eq!(first.len(), 2);
    let bytes: Vec<Vec<u8>> = first.iter().map(|p| fs::read(p).unwrap()).collect();
    render(&mesh_path, &a, &out, &opts, &cfg).unwrap();
    for (p, b) in first.iter().zip(&bytes) {
        assert_eq!(&fs::read(p).unwrap(), b);
    }
    assert_ne!(bytes[0], bytes[1]);

    let fixed = RenderOptions {
        azimuth: Some(0.3),
        elevation: Some(-0.2),
        mode: uv3_render::ShadeMode::Lambertian,
        ..opts.clone()
    };
    assert_eq!(render(&mesh_path, &a, &out, &fixed, &cfg).unwrap(), vec![out.clone()]);
    let steep = RenderOptions { elevation: Some(1.2), ..fixed };
    assert!(render(&mesh_path, &a, &out, &steep, &cfg).is_err());

    let wrong = PipelineConfig { k: 4, ..cfg.clone() };
    precompute(&mesh_path, &dir.path().join("w"), &wrong, false).unwrap();
    let e = generate(&mesh_path, &dir.path().join("w.uv3s"), &params_path, &b, &cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_uv3");
    let dir = tempfile::tempdir().unwrap();
    let missing = Command::new(bin)
        .args(["sample", "nope.obj", "--spectra", "nope.uv3s", "-o"])
        .arg(dir.path().join("x.uv3t"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let bad_rho = Command::new(bin)
        .args(["--rho", "2", "precompute", "m.obj", "-o", "m"])
        .output()
        .unwrap();
    assert_eq!(bad_rho.status.code(), Some(2));

    let mesh = write_mesh(dir.path(), "m.obj", &shapes::icosphere(1, 1.0), "");
    let ok = Command::new(bin)
        .args(["--k", "12", "precompute"])
        .arg(&mesh)
        .arg("-o")
        .arg(dir.path().join("m"))
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.contains("components 1 zero_eigenvalues 1"), "{stdout}");

    let numerical = CliError::from(uv3_core::Error::NoConvergence("x".into()));
    assert_eq!(numerical.exit_code(), 3);
}
