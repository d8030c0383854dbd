//! Binary model format: an 8-byte magic, then little-endian `u64` layer count,
//! layer sizes and activation code, then each layer's weights (`[out][in]`)
//! followed by its biases as little-endian `f64`.

use std::io::{Read, Write};

use super::{Activation, NetworkParams, NnError};

const MAGIC: &[u8; 8] = b"HMDQNET1";
/// Refuse absurd headers before allocating.
const MAX_LAYER: u64 = 1 << 20;

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl NetworkParams {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.sizes.len() as u64).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        w.write_all(&self.activation.code().to_le_bytes())?;
        for (wt, b) in self.weights.iter().zip(&self.biases) {
            for x in wt.iter().chain(b) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let n = read_u64(r)?;
        if !(2..=64).contains(&n) {
            return Err(NnError::Format(format!("implausible layer count {n}")));
        }
        let mut sizes = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let s = read_u64(r)?;
            if s == 0 || s > MAX_LAYER {
                return Err(NnError::Format(format!("implausible layer size {s}")));
            }
            sizes.push(s as usize);
        }
        let code = read_u64(r)?;
        let activation = Activation::from_code(code).ok_or_else(|| NnError::Format(format!("activation {code}")))?;
        let mut p = NetworkParams::zeros(&sizes, activation)?;
        let mut b = [0u8; 8];
        for layer in 0..p.n_layers() {
            for x in p.weights[layer].iter_mut().chain(p.biases[layer].iter_mut()) {
                r.read_exact(&mut b)?;
                *x = f64::from_le_bytes(b);
            }
        }
        if !p.is_finite() {
            return Err(NnError::NonFinite("stored parameters"));
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.n_params() + self.sizes.len() + 3));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let p = Self::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(NnError::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = NetworkParams::new(&[6, 256, 128, 64, 8], Activation::Relu, &mut rng).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 8 + 8 + 5 * 8 + 8 + 8 * p.n_params());
        assert_eq!(NetworkParams::from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn header_layout() {
        let p = NetworkParams::from_parts(&[1, 1], Activation::Relu, vec![vec![2.0]], vec![vec![-0.5]]).unwrap();
        let b = p.to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[40..48].try_into().unwrap()), 2.0);
        assert_eq!(f64::from_le_bytes(b[48..56].try_into().unwrap()), -0.5);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let p = NetworkParams::zeros(&[2, 3], Activation::Tanh).unwrap();
        let b = p.to_bytes();
        assert!(NetworkParams::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(NetworkParams::from_bytes(&bad), Err(NnError::Format(_))));
        let mut long = b;
        long.push(0);
        assert!(NetworkParams::from_bytes(&long).is_err());
    }
}
