//! Ciphertext wire form: little-endian 32-bit length prefix, one header
//! byte packing the polynomial count (high nibble) and level (low nibble),
//! then per-polynomial coefficient arrays as unsigned 64-bit little-endian
//! words, `ring_dim` words per polynomial.

use super::bfv::Ciphertext;
use super::poly::Poly;
use super::{HeError, HeParams};

pub fn encode_ciphertext(ct: &Ciphertext) -> Vec<u8> {
    let n = ct.polys[0].len();
    let body_len = 1 + ct.polys.len() * n * 8;
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_le_bytes());
    out.push(((ct.polys.len() as u8) << 4) | (ct.level & 0x0f));
    for poly in &ct.polys {
        for c in &poly.coeffs {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_ciphertext(data: &[u8], params: &HeParams) -> Result<(Ciphertext, usize), HeError> {
    if data.len() < 5 {
        return Err(HeError::BadWireData("short header".into()));
    }
    let body_len = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
    if data.len() < 4 + body_len {
        return Err(HeError::BadWireData(format!(
            "length prefix {} exceeds available {}",
            body_len,
            data.len() - 4
        )));
    }
    let header = data[4];
    let count = (header >> 4) as usize;
    let level = header & 0x0f;
    if !(2..=3).contains(&count) {
        return Err(HeError::BadWireData(format!("bad polynomial count {count}")));
    }
    let n = params.ring_dim;
    if body_len != 1 + count * n * 8 {
        return Err(HeError::BadWireData(format!(
            "body length {} does not match {} polynomials of dimension {}",
            body_len, count, n
        )));
    }
    let mut polys = Vec::with_capacity(count);
    let mut off = 5;
    let q = params.modulus.value();
    for _ in 0..count {
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            let word = u64::from_le_bytes(data[off..off + 8].try_into().unwrap());
            if (word as u128) >= q {
                return Err(HeError::BadWireData(format!(
                    "coefficient {word} outside Z_q"
                )));
            }
            coeffs.push(word);
            off += 8;
        }
        polys.push(Poly { coeffs });
    }
    Ok((Ciphertext { polys, level }, 4 + body_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{bfv, Plaintext};
    use rand::SeedableRng;

    #[test]
    fn wire_roundtrip() {
        let params = HeParams::default();
        let keys = bfv::keygen(&params, 7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pt = Plaintext::encode(&[42, -17], &params).unwrap();
        let ct = bfv::encrypt(&params, &keys.pk, &pt, &mut rng).unwrap();
        let bytes = encode_ciphertext(&ct);
        assert_eq!(
            u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize,
            bytes.len() - 4
        );
        assert_eq!(bytes[4] >> 4, 2, "polynomial count nibble");
        let (back, consumed) = decode_ciphertext(&bytes, &params).unwrap();
        assert_eq!(consumed, bytes.len());
        assert_eq!(back, ct);
    }

    #[test]
    fn wire_rejects_truncation_and_bad_count() {
        let params = HeParams::default();
        let keys = bfv::keygen(&params, 7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pt = Plaintext::encode(&[1], &params).unwrap();
        let ct = bfv::encrypt(&params, &keys.pk, &pt, &mut rng).unwrap();
        let mut bytes = encode_ciphertext(&ct);
        assert!(decode_ciphertext(&bytes[..bytes.len() - 1], &params).is_err());
        bytes[4] = 0x10 | (bytes[4] & 0x0f); // count = 1
        assert!(decode_ciphertext(&bytes, &params).is_err());
    }
}
