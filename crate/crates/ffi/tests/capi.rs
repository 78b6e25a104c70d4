use std::ptr;

use evm_sinr_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::os::raw::c_char; 256];
    let n = unsafe { evm_sinr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn constellation(order: usize) -> *mut EvmSinrConstellation {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { evm_sinr_constellation_new(order, &mut c) }, EvmSinrStatus::Ok);
    c
}

#[test]
fn constellation_handle_lifecycle() {
    let c = constellation(16);
    assert_eq!(unsafe { evm_sinr_constellation_order(c) }, 16);
    let mut pts = vec![0.0; 32];
    assert_eq!(unsafe { evm_sinr_constellation_points(c, pts.as_mut_ptr(), 16) }, EvmSinrStatus::Ok);
    let power: f64 = pts.chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / 16.0;
    assert!((power - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { evm_sinr_constellation_points(c, pts.as_mut_ptr(), 8) },
        EvmSinrStatus::InvalidArgument
    );
    unsafe { evm_sinr_constellation_free(c) };
    unsafe { evm_sinr_constellation_free(ptr::null_mut()) };
    assert_eq!(unsafe { evm_sinr_constellation_order(ptr::null()) }, 0);
}

#[test]
fn unsupported_order_sets_message() {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { evm_sinr_constellation_new(7, &mut c) }, EvmSinrStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(last_error().contains("unsupported QAM order 7"));
}

#[test]
fn evm_of_offset_points() {
    let c = constellation(4);
    let mut pts = vec![0.0; 8];
    unsafe { evm_sinr_constellation_points(c, pts.as_mut_ptr(), 4) };
    // every sample displaced by 0.1 along the real axis: 10 % RMS EVM
    let reference: Vec<f64> = pts.repeat(3);
    let received: Vec<f64> = reference
        .chunks(2)
        .flat_map(|p| [p[0] + 0.1, p[1]])
        .collect();
    let mut da = 0.0;
    let mut dd = 0.0;
    unsafe {
        assert_eq!(
            evm_sinr_rms_evm(c, received.as_ptr(), reference.as_ptr(), 4, 3, &mut da),
            EvmSinrStatus::Ok
        );
        assert_eq!(
            evm_sinr_rms_evm(c, received.as_ptr(), ptr::null(), 4, 3, &mut dd),
            EvmSinrStatus::Ok
        );
        evm_sinr_constellation_free(c);
    }
    assert!((da - 10.0).abs() < 1e-9);
    assert!((dd - 10.0).abs() < 1e-9);
}

#[test]
fn prediction_and_table() {
    let mut db = 0.0;
    assert_eq!(unsafe { evm_sinr_predict(10.7, 107.0, &mut db) }, EvmSinrStatus::Ok);
    assert!((db - 20.0).abs() < 1e-12);
    assert_eq!(unsafe { evm_sinr_predict(0.0, 107.0, &mut db) }, EvmSinrStatus::UnboundedPrediction);
    let mut a = 0.0;
    assert_eq!(unsafe { evm_sinr_reference_gradient(256, 1, &mut a) }, EvmSinrStatus::Ok);
    assert_eq!(a, 129.0);
    assert_eq!(unsafe { evm_sinr_reference_gradient(4, 1, &mut a) }, EvmSinrStatus::NotTabulated);
    assert_eq!(unsafe { evm_sinr_predict(10.0, 100.0, ptr::null_mut()) }, EvmSinrStatus::NullPointer);
}

#[test]
fn signalled_sinr_of_alternating_grids() {
    // one carrier, two frames: variance 2 for +-1 and 0.5 for +-0.5
    let wanted = [1.0, 0.0, -1.0, 0.0];
    let interferer = [0.5, 0.0, -0.5, 0.0];
    let list = [interferer.as_ptr()];
    let mut db = 0.0;
    let st = unsafe { evm_sinr_signalled(wanted.as_ptr(), list.as_ptr(), 1, 1, 2, 0.5, &mut db) };
    assert_eq!(st, EvmSinrStatus::Ok);
    assert!((db - 10.0 * 2.0f64.log10()).abs() < 1e-12);
    let st = unsafe { evm_sinr_signalled(wanted.as_ptr(), ptr::null(), 0, 1, 2, 0.0, &mut db) };
    assert_eq!(st, EvmSinrStatus::DegenerateInput);
}

#[test]
fn zero_forcing_nulls_cross_talk() {
    // 2 users, 3 antennas
    let h = [
        1.0, 0.0, 0.5, 0.5, 0.0, -1.0, //
        0.2, 0.1, 1.0, 0.0, 0.3, 0.4,
    ];
    let mut w = [0.0; 12];
    let mut cond = 0.0;
    let st = unsafe { evm_sinr_zero_forcing(h.as_ptr(), 2, 3, w.as_mut_ptr(), &mut cond) };
    assert_eq!(st, EvmSinrStatus::Ok);
    assert!(cond >= 1.0);
    let hc = |u: usize, t: usize| (h[2 * (u * 3 + t)], h[2 * (u * 3 + t) + 1]);
    let wc = |t: usize, v: usize| (w[2 * (t * 2 + v)], w[2 * (t * 2 + v) + 1]);
    for u in 0..2 {
        for v in 0..2 {
            let (mut re, mut im) = (0.0, 0.0);
            for t in 0..3 {
                let (a, b) = hc(u, t);
                let (c, d) = wc(t, v);
                re += a * c - b * d;
                im += a * d + b * c;
            }
            let mag = (re * re + im * im).sqrt();
            if u == v {
                assert!(mag > 0.1);
            } else {
                assert!(mag < 1e-12, "leak {u}->{v}: {mag}");
            }
        }
    }
    let rank_one = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let st = unsafe { evm_sinr_zero_forcing(rank_one.as_ptr(), 2, 3, w.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, EvmSinrStatus::IllConditioned);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/evm_sinr.h")).unwrap();
    for name in [
        "typedef struct EvmSinrConstellation EvmSinrConstellation",
        "evm_sinr_last_error_message",
        "evm_sinr_constellation_new",
        "evm_sinr_constellation_free",
        "evm_sinr_constellation_points",
        "evm_sinr_rms_evm",
        "evm_sinr_predict",
        "evm_sinr_reference_gradient",
        "evm_sinr_signalled",
        "evm_sinr_zero_forcing",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
