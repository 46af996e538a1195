mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{random_logits, random_mask};
use lesionwise::io::{
    read_mask, read_raw_header, read_volume, write_mask, write_real, write_volume, Dtype, Volume,
};
use lesionwise::{Error, Grid, LogitVolume, Shape, Spacing};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn expected_mask() -> Vec<bool> {
    let mut v = Vec::new();
    for z in 0..2 {
        for y in 0..3 {
            for x in 0..4 {
                v.push((x + y + z) % 3 == 0);
            }
        }
    }
    v
}

#[test]
fn fixture_header_bytes_are_as_documented() {
    let b = fs::read(fixture("mask_u8.nii")).unwrap();
    assert_eq!(&b[0..4], &[0x5c, 0x01, 0, 0]); // sizeof_hdr = 348, little-endian
    assert_eq!(&b[40..48], &[3, 0, 4, 0, 3, 0, 2, 0]); // dim[0..4]
    assert_eq!(&b[70..74], &[2, 0, 8, 0]); // uint8, 8 bits
    assert_eq!(&b[80..84], &0.5f32.to_le_bytes()); // pixdim[1]
    assert_eq!(&b[88..92], &2.0f32.to_le_bytes()); // pixdim[3]
    assert_eq!(&b[108..112], &352.0f32.to_le_bytes()); // vox_offset
    assert_eq!(&b[344..348], b"n+1\0");
    assert_eq!(b.len(), 352 + 24);
}

#[test]
fn reads_single_file_nifti_plain_and_gzipped() {
    for name in ["mask_u8.nii", "mask_u8.nii.gz"] {
        let m = read_mask(fixture(name)).unwrap();
        assert_eq!(m.shape().dims(), [4, 3, 2]);
        assert_eq!(m.spacing().as_array(), [0.5, 0.5, 2.0]);
        assert_eq!(m.data(), &expected_mask()[..], "{name}");
        assert_eq!(m.spacing().voxel_volume(), 0.5);
    }
}

#[test]
fn reads_big_endian_float_with_scaling() {
    let Volume::Logits(l) = read_volume(fixture("logits_f32_be.nii")).unwrap() else {
        panic!("float data should load as logits");
    };
    assert_eq!(l.shape().dims(), [3, 2, 2]);
    assert_eq!(l.spacing().as_array(), [1.5, 1.0, 0.75]);
    for (i, &v) in l.data().iter().enumerate() {
        assert_eq!(v, 2.0 * (i as f64 - 5.5) + 0.5);
    }
}

#[test]
fn reads_int16_with_trailing_unit_dimension() {
    let m = read_mask(fixture("mask_i16_4d.nii")).unwrap();
    assert_eq!(m.shape().dims(), [2, 2, 2]);
    assert_eq!(
        m.data(),
        &[false, true, false, false, true, false, false, false]
    );
}

#[test]
fn rejects_unsupported_nifti_variants() {
    match read_volume(fixture("pair_magic.nii")) {
        Err(Error::Parse {
            offset, message, ..
        }) => {
            assert_eq!(offset, 344);
            assert!(message.contains("pair"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(
        read_volume(fixture("float64.nii")),
        Err(Error::Parse { offset: 70, .. })
    ));
    assert!(matches!(
        read_volume(fixture("truncated.nii")),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        read_volume(fixture("missing.nii")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn raw_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let shape = Shape::new(7, 5, 3).unwrap();
    let spacing = Spacing::new(0.8, 0.8, 3.0).unwrap();
    let mask = random_mask(shape, 0.3, 1).with_spacing(spacing);
    write_mask(&mask, dir.path().join("m")).unwrap();
    let back = read_mask(dir.path().join("m.json")).unwrap();
    assert_eq!(back, mask);
    assert_eq!(
        read_raw_header(dir.path().join("m")).unwrap().dtype,
        Dtype::U8
    );

    // f32-representable logits survive exactly.
    let l = random_logits(shape, spacing, 5.0, 2);
    let l32 = LogitVolume::new(l.grid().map(|&v| v as f32 as f64)).unwrap();
    write_volume(&Volume::Logits(l32.clone()), dir.path().join("l.raw")).unwrap();
    let Volume::Logits(back) = read_volume(dir.path().join("l")).unwrap() else {
        panic!("expected logits");
    };
    assert_eq!(back.data(), l32.data());
    assert_eq!(back.spacing(), spacing);
    let payload = fs::read(dir.path().join("l.raw")).unwrap();
    assert_eq!(payload.len(), shape.len() * 4);
    assert_eq!(&payload[0..4], &(l32.data()[0] as f32).to_le_bytes());
}

#[test]
fn raw_header_errors_carry_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("bad.json");
    fs::write(&h, "{\n  \"shape\": [2, 2, 2],\n  \"spacing\": [1, 1, 1],\n  \"dtype\": \"u16\",\n  \"order\": \"x-fastest\"\n}\n").unwrap();
    fs::write(dir.path().join("bad.raw"), [0u8; 8]).unwrap();
    match read_volume(&h) {
        Err(Error::Parse { offset, .. }) => assert!(offset > 40 && offset < 80, "offset {offset}"),
        other => panic!("expected parse error, got {other:?}"),
    }

    let grid = Grid::filled(Shape::new(2, 2, 2).unwrap(), Spacing::unit(), 1.0);
    write_real(&grid, dir.path().join("short")).unwrap();
    fs::write(dir.path().join("short.raw"), [0u8; 7]).unwrap();
    assert!(matches!(
        read_volume(dir.path().join("short")),
        Err(Error::Format { .. })
    ));

    fs::write(
        dir.path().join("nan.json"),
        fs::read(dir.path().join("short.json")).unwrap(),
    )
    .unwrap();
    fs::write(dir.path().join("nan.raw"), f32::NAN.to_le_bytes().repeat(8)).unwrap();
    assert!(matches!(
        read_volume(dir.path().join("nan")),
        Err(Error::Format { .. })
    ));
}
