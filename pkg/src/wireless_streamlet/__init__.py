"""Wireless Streamlet: TDMA-scheduled Streamlet consensus for single-hop wireless
clusters, with channel-aware leader election, a coded data plane and the
closed-form liveness analysis."""

__version__ = "0.1.0"
