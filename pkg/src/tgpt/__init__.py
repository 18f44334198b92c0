"""Desk-scale transformer forecasting stack.

Library surface: regular-grid time series containers and long-format CSV
ingestion, classical baseline forecasters, a reverse-mode autodiff tensor,
an encoder-decoder forecasting network with pretrain/zero-shot/fine-tune
workflows, conformal prediction intervals, a benchmark harness, a CLI, and
a token-authenticated HTTP forecast service.
"""

__version__ = "0.1.0"
