"""Scikit-learn style facade over the database-and-compose pipeline.

fit() learns the block database for a category list; transform() turns
layout guidance into composed initial noise images. Parameters follow the
sklearn convention (set verbatim in __init__, validated at fit time) so the
estimator works with get_params/set_params and clone.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .compose import ComposedImage, LayoutGuidance, compose_initial_image, layout_from_dict
from .database import BlockDatabase, build_database, check_categories
from .grid import sample_noise
from .scorer import SyntheticBackend
from .selection import SelectionConfig

# entropy tag separating per-layout transform streams from compose's own tags
_TAG_TRANSFORM = 3


class InitialNoiseComposer(BaseEstimator, TransformerMixin):
    """Builds a block database from categories and composes layouts.

    Parameters
    ----------
    n_images : int, default=100
        Number of noise images scored into the database.
    channels : int, default=4
        Channels per noise image.
    t_obj : float, default=0.5
        Object selection threshold.
    t_bg : float, default=0.1
        Background selection threshold.
    seed : int, default=0
        Seed for noise sampling and per-layout composition streams.
    backend_seed : int, default=0
        Seed of the synthetic scoring backend.
    backend_d : int, default=64
        Embedding dimension of the synthetic scoring backend.

    Attributes
    ----------
    database_ : BlockDatabase
        Fitted block database.
    categories_ : list of str
        Categories the database was built for.
    """

    def __init__(self, n_images=100, channels=4, t_obj=0.5, t_bg=0.1,
                 seed=0, backend_seed=0, backend_d=64):
        self.n_images = n_images
        self.channels = channels
        self.t_obj = t_obj
        self.t_bg = t_bg
        self.seed = seed
        self.backend_seed = backend_seed
        self.backend_d = backend_d

    def fit(self, X, y=None):
        """Builds the block database.

        Args:
            X: iterable of category names.
            y: ignored, present for API compatibility.
        """
        categories = check_categories(X)
        if self.n_images < 1:
            raise ValueError(f"n_images must be >= 1, got {self.n_images}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        # SelectionConfig re-checks thresholds; fail fast at fit time
        SelectionConfig(t_obj=self.t_obj, t_bg=self.t_bg)
        images = sample_noise(self.seed, self.n_images, self.channels)
        backend = SyntheticBackend(seed=self.backend_seed, d=self.backend_d)
        self.categories_ = categories
        self.database_ = build_database(backend, images, categories)
        return self

    def transform(self, X) -> list[ComposedImage]:
        """Composes one initial noise image per layout.

        Args:
            X: iterable of LayoutGuidance or layout dicts.

        Returns:
            list of ComposedImage, one per layout; the layout at position i
            composes under a seed derived from (seed, i), so repeated calls
            are deterministic.
        """
        check_is_fitted(self, "database_")
        cfg = SelectionConfig(t_obj=self.t_obj, t_bg=self.t_bg)
        composed = []
        for index, item in enumerate(X):
            layout = item if isinstance(item, LayoutGuidance) else layout_from_dict(item)
            child = np.random.SeedSequence([self.seed, _TAG_TRANSFORM, index])
            layout_seed = int(child.generate_state(1, dtype=np.uint64)[0])
            composed.append(compose_initial_image(self.database_, layout, cfg, seed=layout_seed))
        return composed

    @property
    def database(self) -> BlockDatabase:
        check_is_fitted(self, "database_")
        return self.database_
