"""Speaker embeddings (d-vectors) trained with a generalized end-to-end loss,
with verification scoring, embedding-space analysis and a speaker-conditioned
toy decoder, built on numpy and scipy."""

__version__ = "0.1.0"
