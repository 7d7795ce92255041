use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::campaign::CampaignId;

/// Length of a volunteer pseudonym in hex characters (64 bits).
pub const PSEUDONYM_HEX_LEN: usize = 16;

pub type CampaignSecret = [u8; 32];

/// Keyed pseudonym of `raw_id` within one campaign: HMAC-SHA-256 under the
/// campaign secret, hex encoded and truncated to 16 characters.
pub fn anonymize(raw_id: &str, campaign_id: &CampaignId, secret: &CampaignSecret) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(campaign_id.as_str().as_bytes());
    mac.update(&[0]);
    mac.update(raw_id.as_bytes());
    let digest = mac.finalize().into_bytes();
    let mut out = hex::encode(digest);
    out.truncate(PSEUDONYM_HEX_LEN);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn deterministic_and_hex() {
        let secret = [7u8; 32];
        let a = anonymize("device-1234", &"c1".into(), &secret);
        assert_eq!(a, anonymize("device-1234", &"c1".into(), &secret));
        assert_eq!(a.len(), PSEUDONYM_HEX_LEN);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn distinct_across_campaigns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let campaigns: Vec<(CampaignId, CampaignSecret)> =
            (0..2).map(|i| (CampaignId(format!("c{i}")), rng.gen())).collect();
        let mut seen = HashSet::new();
        for i in 0..500 {
            let raw = format!("volunteer-{i}-{}", rng.gen::<u32>());
            for (cid, secret) in &campaigns {
                assert!(seen.insert(anonymize(&raw, cid, secret)), "collision for {raw}");
            }
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn no_raw_substring() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let secret: CampaignSecret = rng.gen();
        for _ in 0..1000 {
            let len = rng.gen_range(6..20);
            let raw: String = (0..len).map(|_| rng.sample(rand::distributions::Alphanumeric) as char).collect();
            let p = anonymize(&raw, &"c1".into(), &secret);
            assert!(!p.contains(&raw) && p != raw);
        }
    }
}
