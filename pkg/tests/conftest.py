"""Shared test helpers."""

import numpy as np

from cfs_curate import stems


def relu_margin(stem_cache) -> float:
    """Smallest |pre-relu activation| in a cached stem forward pass.

    Finite differences at step h straddle the relu kink whenever an
    activation sits within h of zero, so gradient-check inputs are
    redrawn until this margin clears a safety band.
    """
    margins = [np.abs(layer[5]).min() for layer in stem_cache.layers]
    return float(min(margins)) if margins else float("inf")


def kink_safe_images(rng, stem_config, stem_params, shape, band=1e-3, max_tries=100):
    """Draw an image batch whose stem pre-relu activations all clear ``band``."""
    for _ in range(max_tries):
        images = rng.uniform(0.05, 0.95, shape)
        _, cache = stems.stem_forward_cached(images, stem_config, stem_params)
        if relu_margin(cache) > band:
            return images
    raise AssertionError(f"no kink-safe batch found in {max_tries} tries")
