use rand::Rng;

use nlmimo::channel::complex_gaussian;
use nlmimo::fec::{ldpc_decode, ldpc_encode, BaseMatrix, LdpcCode, TransportCodec, MAX_ITERATIONS};
use nlmimo::phy::Constellation;
use nlmimo::seed;

fn random_bits(n: usize, s: u64) -> Vec<u8> {
    let mut rng = seed::rng(s, &[]);
    (0..n).map(|_| rng.gen_range(0..2u8)).collect()
}

#[test]
fn mother_code_roundtrip_and_syndrome() {
    let code = LdpcCode::from_base(&BaseMatrix::half_rate(), 54).unwrap();
    for s in 0..200 {
        let info = random_bits(code.k(), s);
        let cw = ldpc_encode(&code, &info).unwrap();
        assert!(code.parity_check().syndrome_is_zero(&cw));
        let llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        let d = ldpc_decode(&code, &llrs, MAX_ITERATIONS).unwrap();
        assert!(d.converged);
        assert_eq!(d.info, info);
    }
}

#[test]
fn transport_roundtrip_across_mcs_sizes() {
    let base = BaseMatrix::half_rate();
    for (rate, g) in [(120.0 / 1024.0, 288), (0.5, 576), (378.0 / 1024.0, 1152), (526.0 / 1024.0, 2304)] {
        let codec = TransportCodec::new(&base, rate, g).unwrap();
        for s in 0..50 {
            let info = random_bits(codec.k(), 1000 + s);
            let tx = codec.encode(&info).unwrap();
            assert_eq!(tx.len(), g);
            let llrs: Vec<f64> = tx.iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect();
            let (out, ok) = codec.decode(&llrs, MAX_ITERATIONS).unwrap();
            assert!(ok);
            assert_eq!(out, info);
        }
    }
}

/// BPSK over 1×1 AWGN through the full transport chain.
fn awgn_per(codec: &TransportCodec, snr_db: f64, frames: u64) -> f64 {
    let nv = 10f64.powf(-snr_db / 10.0);
    let c = Constellation::qpsk();
    let mut errors = 0;
    for f in 0..frames {
        let info = random_bits(codec.k(), seed::derive(5, &[f]));
        let tx = codec.encode(&info).unwrap();
        let mut rng = seed::rng(6, &[f]);
        let mut llrs = Vec::with_capacity(tx.len());
        for pair in tx.chunks(2) {
            let x = c.modulate(pair).unwrap()[0];
            let y = x + complex_gaussian(&mut rng) * nv.sqrt();
            llrs.extend(c.demap_llr(y, nv).unwrap());
        }
        let (out, _) = codec.decode(&llrs, MAX_ITERATIONS).unwrap();
        errors += u64::from(out != info);
    }
    errors as f64 / frames as f64
}

#[test]
fn coded_per_falls_with_snr() {
    let codec = TransportCodec::new(&BaseMatrix::half_rate(), 0.5, 576).unwrap();
    let pers: Vec<f64> = [0.0, 1.5, 3.0].iter().map(|&s| awgn_per(&codec, s, 600)).collect();
    assert!(pers[0] > pers[1] && pers[1] > pers[2], "{pers:?}");
    assert!(pers[0] > 0.2 && pers[2] < 0.1, "{pers:?}");
}
