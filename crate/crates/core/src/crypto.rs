//! Public-key primitives behind one interface.
//!
//! * `real`: X25519 key agreement wrapping a fresh AES-256-CTR key per
//!   message (random IV), Ed25519 signatures.
//! * `testvec`: the real scheme with encryption randomness derived from the
//!   key and plaintext, so fixtures are reproducible.
//! * `identity`: no confidentiality and no authenticity. Positive control
//!   for the games only.
//!
//! Public keys are `x25519-pub ‖ ed25519-verifying-key` and private keys
//! `x25519-secret ‖ ed25519-seed`, so encryption and signing use separate
//! key material.

use std::fmt;
use std::str::FromStr;

use aes::cipher::{KeyIvInit, StreamCipher};
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeyPair {
    pub public: Vec<u8>,
    /// `None` when only the principal's identity is known.
    pub private: Option<Vec<u8>>,
}

impl KeyPair {
    pub fn public_only(&self) -> KeyPair {
        KeyPair {
            public: self.public.clone(),
            private: None,
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &hex8(&self.public))
            .field("private", &self.private.as_ref().map(|_| "<secret>"))
            .finish()
    }
}

/// First eight bytes in hex, for human-readable output.
pub fn hex8(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("decryption failed")]
pub struct DecryptError;

pub trait CryptoProvider: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair;
    fn encrypt(&self, public: &[u8], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8>;
    fn decrypt(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, DecryptError>;
    fn sign(&self, private: &[u8], message: &[u8], rng: &mut dyn RngCore) -> Vec<u8>;
    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool;
    /// Ciphertext length as a function of plaintext length only.
    fn ciphertext_len(&self, plaintext_len: usize) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    Real,
    TestVec,
    Identity,
}

impl ProviderKind {
    pub fn provider(self) -> &'static dyn CryptoProvider {
        match self {
            ProviderKind::Real => &RealProvider,
            ProviderKind::TestVec => &TestVecProvider,
            ProviderKind::Identity => &IdentityProvider,
        }
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ProviderKind::Real),
            "testvec" => Ok(ProviderKind::TestVec),
            "identity" => Ok(ProviderKind::Identity),
            other => Err(format!("unknown provider `{other}` (expected real, testvec or identity)")),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.provider().name())
    }
}

const KEY_HALF: usize = 32;
const EPH_LEN: usize = 32;
const IV_LEN: usize = 16;
const OVERHEAD: usize = EPH_LEN + IV_LEN;

fn random32(rng: &mut dyn RngCore) -> [u8; 32] {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    b
}

fn split_pub(public: &[u8]) -> Option<([u8; 32], [u8; 32])> {
    if public.len() != 2 * KEY_HALF {
        return None;
    }
    Some((public[..32].try_into().ok()?, public[32..].try_into().ok()?))
}

fn hybrid_generate(rng: &mut dyn RngCore) -> KeyPair {
    let x = StaticSecret::from(random32(rng));
    let seed = random32(rng);
    let ed = SigningKey::from_bytes(&seed);
    let mut public = XPublic::from(&x).as_bytes().to_vec();
    public.extend_from_slice(ed.verifying_key().as_bytes());
    let mut private = x.to_bytes().to_vec();
    private.extend_from_slice(&seed);
    KeyPair {
        public,
        private: Some(private),
    }
}

fn stream_key(eph_pub: &[u8; 32], recipient: &[u8; 32], shared: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"clio-hybrid-v1");
    h.update(eph_pub);
    h.update(recipient);
    h.update(shared);
    h.finalize().into()
}

fn hybrid_encrypt(public: &[u8], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
    let (xpub, _) = split_pub(public).expect("malformed public key");
    let eph = StaticSecret::from(random32(rng));
    let eph_pub = XPublic::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublic::from(xpub)).to_bytes();
    let key = stream_key(&eph_pub, &xpub, &shared);
    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut iv);
    let mut body = plaintext.to_vec();
    Aes256Ctr::new(&key.into(), &iv.into()).apply_keystream(&mut body);
    let mut out = Vec::with_capacity(OVERHEAD + body.len());
    out.extend_from_slice(&eph_pub);
    out.extend_from_slice(&iv);
    out.extend_from_slice(&body);
    out
}

fn hybrid_decrypt(private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, DecryptError> {
    if private.len() != 2 * KEY_HALF || ciphertext.len() < OVERHEAD {
        return Err(DecryptError);
    }
    let secret = StaticSecret::from(<[u8; 32]>::try_from(&private[..32]).unwrap());
    let own_pub = XPublic::from(&secret).to_bytes();
    let eph_pub: [u8; 32] = ciphertext[..EPH_LEN].try_into().unwrap();
    let iv: [u8; IV_LEN] = ciphertext[EPH_LEN..OVERHEAD].try_into().unwrap();
    let shared = secret.diffie_hellman(&XPublic::from(eph_pub)).to_bytes();
    let key = stream_key(&eph_pub, &own_pub, &shared);
    let mut body = ciphertext[OVERHEAD..].to_vec();
    Aes256Ctr::new(&key.into(), &iv.into()).apply_keystream(&mut body);
    Ok(body)
}

fn hybrid_sign(private: &[u8], message: &[u8]) -> Vec<u8> {
    let seed: [u8; 32] = private[KEY_HALF..2 * KEY_HALF].try_into().expect("malformed private key");
    SigningKey::from_bytes(&seed).sign(message).to_bytes().to_vec()
}

fn hybrid_verify(public: &[u8], message: &[u8], signature: &[u8]) -> bool {
    let Some((_, ed)) = split_pub(public) else { return false };
    let Ok(vk) = VerifyingKey::from_bytes(&ed) else { return false };
    let Ok(sig) = Signature::from_slice(signature) else { return false };
    vk.verify_strict(message, &sig).is_ok()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RealProvider;

impl CryptoProvider for RealProvider {
    fn name(&self) -> &'static str {
        "real"
    }

    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        hybrid_generate(rng)
    }

    fn encrypt(&self, public: &[u8], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        hybrid_encrypt(public, plaintext, rng)
    }

    fn decrypt(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, DecryptError> {
        hybrid_decrypt(private, ciphertext)
    }

    fn sign(&self, private: &[u8], message: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        hybrid_sign(private, message)
    }

    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool {
        hybrid_verify(public, message, signature)
    }

    fn ciphertext_len(&self, plaintext_len: usize) -> usize {
        plaintext_len + OVERHEAD
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TestVecProvider;

impl CryptoProvider for TestVecProvider {
    fn name(&self) -> &'static str {
        "testvec"
    }

    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        hybrid_generate(rng)
    }

    fn encrypt(&self, public: &[u8], plaintext: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(b"clio-testvec");
        h.update((public.len() as u64).to_be_bytes());
        h.update(public);
        h.update(plaintext);
        let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
        hybrid_encrypt(public, plaintext, &mut rng)
    }

    fn decrypt(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, DecryptError> {
        hybrid_decrypt(private, ciphertext)
    }

    fn sign(&self, private: &[u8], message: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        hybrid_sign(private, message)
    }

    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool {
        hybrid_verify(public, message, signature)
    }

    fn ciphertext_len(&self, plaintext_len: usize) -> usize {
        plaintext_len + OVERHEAD
    }
}

const ID_TAG: &[u8; 4] = b"IDEN";
const ID_SIG: &[u8; 6] = b"IDSIGN";

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl CryptoProvider for IdentityProvider {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        KeyPair {
            public: random32(rng).to_vec(),
            private: Some(random32(rng).to_vec()),
        }
    }

    fn encrypt(&self, _public: &[u8], plaintext: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        let mut out = ID_TAG.to_vec();
        out.extend_from_slice(plaintext);
        out
    }

    fn decrypt(&self, _private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, DecryptError> {
        match ciphertext.strip_prefix(ID_TAG) {
            Some(pt) => Ok(pt.to_vec()),
            None => Err(DecryptError),
        }
    }

    fn sign(&self, _private: &[u8], _message: &[u8], _rng: &mut dyn RngCore) -> Vec<u8> {
        ID_SIG.to_vec()
    }

    fn verify(&self, _public: &[u8], _message: &[u8], signature: &[u8]) -> bool {
        signature == ID_SIG
    }

    fn ciphertext_len(&self, plaintext_len: usize) -> usize {
        plaintext_len + ID_TAG.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn real_roundtrip_and_randomization() {
        let p = RealProvider;
        let mut r = rng(1);
        let kp = p.generate(&mut r);
        let mut m = vec![0u8; 1024];
        r.fill_bytes(&mut m);
        let c1 = p.encrypt(&kp.public, &m, &mut r);
        let c2 = p.encrypt(&kp.public, &m, &mut r);
        assert_ne!(c1, c2);
        assert_eq!(c1.len(), p.ciphertext_len(m.len()));
        assert_eq!(p.decrypt(kp.private.as_ref().unwrap(), &c1).unwrap(), m);
    }

    #[test]
    fn wrong_key_does_not_recover_plaintext() {
        let p = RealProvider;
        let mut r = rng(2);
        let a = p.generate(&mut r);
        let b = p.generate(&mut r);
        let c = p.encrypt(&a.public, b"hello world", &mut r);
        assert_ne!(p.decrypt(b.private.as_ref().unwrap(), &c).unwrap(), b"hello world");
    }

    #[test]
    fn signatures_detect_bit_flips() {
        let p = RealProvider;
        let mut r = rng(3);
        let kp = p.generate(&mut r);
        let mut msg = b"pay 10 to bob".to_vec();
        let sig = p.sign(kp.private.as_ref().unwrap(), &msg, &mut r);
        assert!(p.verify(&kp.public, &msg, &sig));
        msg[4] ^= 1;
        assert!(!p.verify(&kp.public, &msg, &sig));
        let other = p.generate(&mut r);
        msg[4] ^= 1;
        assert!(!p.verify(&other.public, &msg, &sig));
    }

    #[test]
    fn testvec_is_deterministic() {
        let p = TestVecProvider;
        let kp = p.generate(&mut rng(4));
        let a = p.encrypt(&kp.public, b"x", &mut rng(5));
        let b = p.encrypt(&kp.public, b"x", &mut rng(6));
        assert_eq!(a, b);
        assert_eq!(p.decrypt(kp.private.as_ref().unwrap(), &a).unwrap(), b"x");
    }

    #[test]
    fn identity_leaks_plaintext() {
        let p = IdentityProvider;
        let kp = p.generate(&mut rng(7));
        let c = p.encrypt(&kp.public, b"x", &mut rng(8));
        assert!(c.windows(1).any(|w| w == b"x"));
        assert_eq!(p.decrypt(&[], &c).unwrap(), b"x");
        assert!(p.verify(&kp.public, b"anything", &p.sign(&[], b"y", &mut rng(9))));
    }

    #[test]
    fn length_profile_depends_only_on_length() {
        for kind in [ProviderKind::Real, ProviderKind::TestVec, ProviderKind::Identity] {
            let p = kind.provider();
            let mut r = rng(10);
            let kp = p.generate(&mut r);
            for n in [0usize, 1, 17, 300] {
                let mut m1 = vec![0u8; n];
                let mut m2 = vec![0u8; n];
                r.fill_bytes(&mut m1);
                r.fill_bytes(&mut m2);
                let l1 = p.encrypt(&kp.public, &m1, &mut r).len();
                let l2 = p.encrypt(&kp.public, &m2, &mut r).len();
                assert_eq!(l1, l2);
                assert_eq!(l1, p.ciphertext_len(n));
            }
        }
    }
}
