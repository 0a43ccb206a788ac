"""Coded data plane: GF(256) coding, commitments, retrieval and lifecycle."""
