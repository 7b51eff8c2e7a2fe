use std::io::Write;

use sha2::{Digest, Sha256};

use super::{ConversationStore, StoreError};
use crate::domain::{ImageId, ImageRef, MediaType};

pub const DEFAULT_MAX_IMAGE_BYTES: u64 = 10 * 1024 * 1024;

impl ConversationStore {
    /// Stores image bytes content-addressed by sha256. Storing the same
    /// bytes twice yields two refs sharing one blob.
    pub fn put_image(&self, bytes: &[u8], media_type: &str) -> Result<ImageRef, StoreError> {
        let media = MediaType::from_mime(media_type)
            .ok_or_else(|| StoreError::UnsupportedMediaType(media_type.to_owned()))?;
        let size = bytes.len() as u64;
        if size > self.config.max_image_bytes {
            return Err(StoreError::TooLarge { size, limit: self.config.max_image_bytes });
        }
        let sha256 = hex::encode(Sha256::digest(bytes));
        let storage_key = format!("{sha256}.{}", media.extension());
        let path = self.config.blob_dir.join(&storage_key);
        if !path.exists() {
            let tmp = self.config.blob_dir.join(format!(".{storage_key}.{}.tmp", ImageId::random()));
            let mut file = std::fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            if self.config.fsync_on_append {
                file.sync_all()?;
            }
            std::fs::rename(&tmp, &path)?;
            if self.config.fsync_on_append {
                std::fs::File::open(&self.config.blob_dir)?.sync_all()?;
            }
        }
        Ok(ImageRef { id: ImageId::random(), storage_key, media_type: media, byte_size: size, sha256 })
    }

    /// Reads a stored image, checking its digest.
    pub fn get_image(&self, image: &ImageRef) -> Result<Vec<u8>, StoreError> {
        let expected = format!("{}.{}", image.sha256, image.media_type.extension());
        if image.storage_key != expected {
            return Err(StoreError::InvalidName(image.storage_key.clone()));
        }
        let path = self.config.blob_dir.join(&image.storage_key);
        let bytes = std::fs::read(&path)?;
        if hex::encode(Sha256::digest(&bytes)) != image.sha256 {
            return Err(StoreError::Corrupt { path, line: 0, detail: "blob digest mismatch".into() });
        }
        Ok(bytes)
    }
}
