mod common;

use std::collections::BTreeMap;

use acopf_core::builders::build;
use acopf_core::export::{export_json, export_point, export_sdpa, import_json, import_point, ExportError};
use acopf_core::ir::{min_eigenvalue, FormKind};
use acopf_core::transforms::lift_point;
use nalgebra::DMatrix;

use common::{case5, local_points};

const KINDS: [FormKind; 11] = [
    FormKind::Siv,
    FormKind::VoltageOnly,
    FormKind::Polar,
    FormKind::Jabr,
    FormKind::Mixed,
    FormKind::Matrix,
    FormKind::SdpReal,
    FormKind::SdpV,
    FormKind::SdpX,
    FormKind::SocpX,
    FormKind::Qc,
];

#[test]
fn json_round_trip_and_canonical() {
    let g = case5();
    for kind in KINDS {
        let f = build(kind, &g).unwrap();
        let text = export_json(&f);
        assert_eq!(import_json(&text).unwrap(), f, "{kind:?}");
        assert_eq!(export_json(&build(kind, &g).unwrap()), text, "{kind:?}");
    }
}

#[test]
fn json_documents_record_kind_and_grid() {
    let f = build(FormKind::Jabr, &case5()).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&export_json(&f)).unwrap();
    assert_eq!(doc["metadata"]["kind"], "jabr");
    assert_eq!(doc["metadata"]["grid_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["schema_version"], 1);
}

#[test]
fn point_files_round_trip() {
    let g = case5();
    let lp = &local_points(&g, 1)[0];
    for kind in KINDS {
        let f = build(kind, &g).unwrap();
        let p = lift_point(&g, kind, &lp.voltages, &lp.generation);
        assert_eq!(import_point(&export_point(&p), &f).unwrap(), p);
    }
    let jabr = build(FormKind::Jabr, &g).unwrap();
    let siv_point = lift_point(&g, FormKind::Siv, &lp.voltages, &lp.generation);
    assert!(import_point(&export_point(&siv_point), &jabr).is_err());
}

/// Parsed SDPA problem: objective vector and, per block, `F_0..F_m`.
struct Sdpa {
    m: usize,
    sizes: Vec<i64>,
    c: Vec<f64>,
    entries: BTreeMap<(usize, usize, usize, usize), f64>,
}

fn parse_sdpa(text: &str) -> Sdpa {
    let mut lines = text.lines().filter(|l| !l.starts_with('*'));
    let m: usize = lines.next().unwrap().trim().parse().unwrap();
    let n_blocks: usize = lines.next().unwrap().trim().parse().unwrap();
    let sizes: Vec<i64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(sizes.len(), n_blocks);
    let c: Vec<f64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(c.len(), m);
    let mut entries = BTreeMap::new();
    for l in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(f.len(), 5, "{l}");
        let k = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(k.2 <= k.3, "upper triangle only: {l}");
        let mantissa = f[4].split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{l}");
        assert!(entries.insert(k, f[4].parse().unwrap()).is_none());
    }
    Sdpa { m, sizes, c, entries }
}

impl Sdpa {
    /// `sum_i F_i x_i - F_0` for one block.
    fn block_at(&self, blk: usize, x: &[f64]) -> DMatrix<f64> {
        let d = self.sizes[blk - 1].unsigned_abs() as usize;
        let mut a = DMatrix::zeros(d, d);
        for (&(mat, b, i, j), &v) in &self.entries {
            if b != blk {
                continue;
            }
            let w = if mat == 0 { -v } else { v * x[mat - 1] };
            a[(i - 1, j - 1)] += w;
            if i != j {
                a[(j - 1, i - 1)] += w;
            }
        }
        a
    }
}

#[test]
fn sdpa_of_case5_real_sdp() {
    let g = case5();
    let f = build(FormKind::SdpReal, &g).unwrap();
    let text = export_sdpa(&f).unwrap();
    let s = parse_sdpa(&text);
    assert_eq!(s.m, f.variables().len());
    assert!(s.sizes.len() >= 2);
    assert_eq!(s.sizes.iter().filter(|&&d| d == 10).count(), 1);
    assert_eq!(s.sizes.iter().filter(|&&d| d == 3).count(), 4);
    assert!(*s.sizes.last().unwrap() < 0);

    // Feasible lifted points are feasible for the written problem, with the
    // same objective up to the recorded constant.
    let constant = f.objective().constant_term();
    let header = text.lines().find(|l| l.contains("objective constant")).unwrap();
    assert_eq!(header.rsplit(' ').next().unwrap().parse::<f64>().unwrap(), constant);
    for lp in local_points(&g, 3) {
        let x = f.values(&lift_point(&g, FormKind::SdpReal, &lp.voltages, &lp.generation)).unwrap();
        for blk in 1..=s.sizes.len() {
            let a = s.block_at(blk, &x);
            if s.sizes[blk - 1] < 0 {
                assert!(a.diagonal().iter().all(|&v| v >= -1e-8));
            } else {
                assert!(min_eigenvalue(&a) >= -1e-8, "block {blk}");
            }
        }
        let cx: f64 = s.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        assert!((cx + constant - f.objective().eval(&x)).abs() <= 1e-9 * cx.abs().max(1.0));
    }
}

#[test]
fn sdpa_rejects_nonlinear_models() {
    let g = case5();
    for kind in [FormKind::Polar, FormKind::Siv, FormKind::Matrix, FormKind::VoltageOnly] {
        assert!(matches!(export_sdpa(&build(kind, &g).unwrap()), Err(ExportError::UnsupportedConstraint(_))), "{kind:?}");
    }
}

#[test]
fn sdpa_is_deterministic() {
    let g = case5();
    for kind in [FormKind::SdpReal, FormKind::SocpX, FormKind::SdpV] {
        let a = export_sdpa(&build(kind, &g).unwrap());
        assert_eq!(a, export_sdpa(&build(kind, &g).unwrap()));
    }
}
