//! Length-hiding padding. A plaintext is framed as [len u32][bytes] and
//! zero-filled to the smallest bucket that holds it, so observed sizes take
//! only three values.

use thiserror::Error;

pub const PAD_BUCKETS: [usize; 3] = [1024, 4096, 16384];

/// Largest message the widest bucket can frame.
pub const MAX_MESSAGE_LEN: usize = PAD_BUCKETS[2] - 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PadError {
    #[error("message of {len} bytes exceeds the largest bucket")]
    TooLong { len: usize },
    #[error("padded length {len} is not a bucket size")]
    NotABucket { len: usize },
    #[error("length header inconsistent with bucket")]
    BadHeader,
    #[error("padding bytes not zero")]
    DirtyPadding,
}

/// Smallest bucket that frames a message of `len` bytes.
pub fn bucket_for(len: usize) -> Option<usize> {
    PAD_BUCKETS.iter().copied().find(|b| b - 4 >= len)
}

pub fn pad(message: &[u8]) -> Result<Vec<u8>, PadError> {
    let bucket = bucket_for(message.len()).ok_or(PadError::TooLong {
        len: message.len(),
    })?;
    let mut out = Vec::with_capacity(bucket);
    out.extend_from_slice(&(message.len() as u32).to_le_bytes());
    out.extend_from_slice(message);
    out.resize(bucket, 0);
    Ok(out)
}

pub fn unpad(padded: &[u8]) -> Result<Vec<u8>, PadError> {
    if !PAD_BUCKETS.contains(&padded.len()) {
        return Err(PadError::NotABucket { len: padded.len() });
    }
    let len = u32::from_le_bytes(padded[..4].try_into().unwrap()) as usize;
    if len > padded.len() - 4 {
        return Err(PadError::BadHeader);
    }
    if padded[4 + len..].iter().any(|&b| b != 0) {
        return Err(PadError::DirtyPadding);
    }
    Ok(padded[4..4 + len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_for(0), Some(1024));
        assert_eq!(bucket_for(1020), Some(1024));
        assert_eq!(bucket_for(1021), Some(4096));
        assert_eq!(bucket_for(4092), Some(4096));
        assert_eq!(bucket_for(4093), Some(16384));
        assert_eq!(bucket_for(16380), Some(16384));
        assert_eq!(bucket_for(16381), None);
    }

    #[test]
    fn padded_length_is_exactly_the_bucket() {
        for (len, bucket) in [(0, 1024), (1, 1024), (1021, 4096), (9999, 16384)] {
            assert_eq!(pad(&vec![7u8; len]).unwrap().len(), bucket);
        }
        assert_eq!(
            pad(&[0u8; MAX_MESSAGE_LEN + 1]).unwrap_err(),
            PadError::TooLong { len: 16381 }
        );
    }

    #[test]
    fn malformed_unpad_cases() {
        assert_eq!(
            unpad(&[0u8; 1000]).unwrap_err(),
            PadError::NotABucket { len: 1000 }
        );
        // header claims more payload than the bucket holds
        let mut buf = vec![0u8; 1024];
        buf[..4].copy_from_slice(&2000u32.to_le_bytes());
        assert_eq!(unpad(&buf).unwrap_err(), PadError::BadHeader);
        // nonzero padding after the payload
        let mut buf = pad(b"hi").unwrap();
        buf[500] = 1;
        assert_eq!(unpad(&buf).unwrap_err(), PadError::DirtyPadding);
    }

    proptest! {
        #[test]
        fn roundtrips_and_hides_length(msg in proptest::collection::vec(any::<u8>(), 0..4000)) {
            let padded = pad(&msg).unwrap();
            prop_assert!(PAD_BUCKETS.contains(&padded.len()));
            prop_assert_eq!(unpad(&padded).unwrap(), msg);
        }
    }
}
