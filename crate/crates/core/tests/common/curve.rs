//! Textbook secp256k1 in affine coordinates over `BigUint`. Slow and
//! deliberately naive; it shares no code with the library's curve backend.

use num_bigint::BigUint;
use num_traits::Zero;
use sha2::{Digest, Sha256};

pub struct Curve {
    pub p: BigUint,
    pub n: BigUint,
    pub g: Point,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Point {
    Infinity,
    Affine(BigUint, BigUint),
}

fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).unwrap()
}

pub fn secp256k1() -> Curve {
    Curve {
        p: hex("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F"),
        n: hex("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141"),
        g: Point::Affine(
            hex("79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798"),
            hex("483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8"),
        ),
    }
}

pub fn be32(x: &BigUint) -> [u8; 32] {
    let b = x.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - b.len()..].copy_from_slice(&b);
    out
}

impl Curve {
    fn sub_mod(&self, a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
        ((a % m) + m - (b % m)) % m
    }

    pub fn inv(&self, a: &BigUint, m: &BigUint) -> BigUint {
        a.modpow(&(m - 2u32), m)
    }

    pub fn on_curve(&self, pt: &Point) -> bool {
        match pt {
            Point::Infinity => true,
            Point::Affine(x, y) => (y * y) % &self.p == (x * x * x + 7u32) % &self.p,
        }
    }

    pub fn add(&self, a: &Point, b: &Point) -> Point {
        let p = &self.p;
        match (a, b) {
            (Point::Infinity, q) | (q, Point::Infinity) => q.clone(),
            (Point::Affine(x1, y1), Point::Affine(x2, y2)) => {
                let lambda = if x1 == x2 {
                    if ((y1 + y2) % p).is_zero() {
                        return Point::Infinity;
                    }
                    (BigUint::from(3u32) * x1 * x1) % p
                        * self.inv(&((BigUint::from(2u32) * y1) % p), p)
                        % p
                } else {
                    self.sub_mod(y2, y1, p) * self.inv(&self.sub_mod(x2, x1, p), p) % p
                };
                let x3 = self.sub_mod(&(&lambda * &lambda), &(x1 + x2), p);
                let y3 = self.sub_mod(&(&lambda * self.sub_mod(x1, &x3, p)), y1, p);
                Point::Affine(x3, y3)
            }
        }
    }

    pub fn neg(&self, a: &Point) -> Point {
        match a {
            Point::Infinity => Point::Infinity,
            Point::Affine(x, y) => Point::Affine(x.clone(), (&self.p - y) % &self.p),
        }
    }

    pub fn mul(&self, k: &BigUint, pt: &Point) -> Point {
        let mut acc = Point::Infinity;
        for i in (0..k.bits()).rev() {
            acc = self.add(&acc, &acc);
            if k.bit(i) {
                acc = self.add(&acc, pt);
            }
        }
        acc
    }

    pub fn compress(&self, pt: &Point) -> Vec<u8> {
        match pt {
            Point::Infinity => vec![0],
            Point::Affine(x, y) => {
                let mut out = vec![if y.bit(0) { 3 } else { 2 }];
                out.extend_from_slice(&be32(x));
                out
            }
        }
    }

    /// Point with the given x and y parity, if x is on the curve.
    pub fn lift_x(&self, x: &BigUint, odd: bool) -> Option<Point> {
        let p = &self.p;
        if x >= p {
            return None;
        }
        let rhs = (x * x * x + 7u32) % p;
        let y = rhs.modpow(&((p + 1u32) >> 2), p);
        if (&y * &y) % p != rhs {
            return None;
        }
        let y = if y.bit(0) == odd { y } else { (p - &y) % p };
        Some(Point::Affine(x.clone(), y))
    }

    /// `Q = r⁻¹ (s·R − z·G)`.
    pub fn recover(&self, z: &BigUint, r: &BigUint, s: &BigUint, v: u8) -> Option<Point> {
        let n = &self.n;
        if r.is_zero() || r >= n || s.is_zero() || s >= n || v > 1 {
            return None;
        }
        let big_r = self.lift_x(r, v == 1)?;
        let sr = self.mul(s, &big_r);
        let zg = self.mul(&(z % n), &self.g);
        let q = self.mul(&self.inv(r, n), &self.add(&sr, &self.neg(&zg)));
        (q != Point::Infinity).then_some(q)
    }

    /// Plain ECDSA verification equation.
    pub fn verify(&self, q: &Point, z: &BigUint, r: &BigUint, s: &BigUint) -> bool {
        let n = &self.n;
        if r.is_zero() || r >= n || s.is_zero() || s >= n {
            return false;
        }
        let w = self.inv(s, n);
        let u1 = (z * &w) % n;
        let u2 = (r * &w) % n;
        match self.add(&self.mul(&u1, &self.g), &self.mul(&u2, q)) {
            Point::Infinity => false,
            Point::Affine(x, _) => &(x % n) == r,
        }
    }

    /// Iterated hash of `ss`, `ss‖ss`, … until the integer lands in (0, n).
    pub fn derive_scalar(&self, ss: &[u8], wf: u32) -> BigUint {
        let mut msg = ss.to_vec();
        loop {
            let mut h = Sha256::digest(&msg).to_vec();
            for _ in 1..wf {
                h = Sha256::digest(&h).to_vec();
            }
            let k = BigUint::from_bytes_be(&h);
            if !k.is_zero() && k < self.n {
                return k;
            }
            msg.extend_from_slice(ss);
        }
    }

    pub fn public_key(&self, ss: &[u8], wf: u32) -> Vec<u8> {
        self.compress(&self.mul(&self.derive_scalar(ss, wf), &self.g))
    }

    pub fn digest(msg: &[u8]) -> BigUint {
        BigUint::from_bytes_be(&Sha256::digest(msg))
    }

    pub fn half_n(&self) -> BigUint {
        &self.n >> 1
    }
}
