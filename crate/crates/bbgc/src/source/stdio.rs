use std::io::{Read, Write};

use bbgc_core::{Generator, LatentCode, Latents};

use crate::error::{Error, Result};
use crate::store::{encode_batch, read_batch};

/// Child side of the subprocess protocol: answers framed latent batches with
/// framed embedding batches until the input ends. Returns the batch count.
pub fn serve<G: Generator, R: Read, W: Write>(generator: &G, mut input: R, mut output: W) -> Result<u64> {
    let mut served = 0;
    while let Some((header, records)) = read_batch(&mut input)? {
        if header.latent_dim() != generator.latent_dim() {
            return Err(bbgc_core::Error::DimensionMismatch {
                expected: generator.latent_dim(),
                found: header.latent_dim(),
            }
            .into());
        }
        let mut latents = Latents::with_capacity(header.latent_dim(), records.len());
        for r in records {
            latents.push(&LatentCode::new(r.latent)?)?;
        }
        let embeddings = generator.generate_batch(&latents)?;
        let frame = encode_batch(&latents, Some(&embeddings), header.seed)?;
        output.write_all(&frame).and_then(|_| output.flush()).map_err(|e| Error::io("<stdout>", e))?;
        served += 1;
    }
    Ok(served)
}
