"""Synthetic two-domain benchmark: users share a latent preference vector
across domains, so a source history is genuinely informative about target
ratings. Used by the desk-scale end-to-end checks and the CLI demo."""
from __future__ import annotations

import numpy as np

from .data import DomainData, RatingRecord, make_domain
from .rng import make_rng


def generate_pair(n_users: int = 2000, n_items: int = 300, latent_dim: int = 8,
                  ratings_per_user: int = 10, noise_std: float = 0.1,
                  seed: int = 0) -> tuple[DomainData, DomainData]:
    """Two domains over the same user population.

    Rating of (user, item) is a scaled latent dot product plus Gaussian
    noise, clipped into [0, 5].
    """
    rng = make_rng(seed, 0x5E17)
    z_users = rng.standard_normal((n_users, latent_dim))
    domains = []
    for d in range(2):
        z_items = rng.standard_normal((n_items, latent_dim))
        records: list[RatingRecord] = []
        position = 0
        for i in range(n_users):
            items = rng.choice(n_items, size=ratings_per_user, replace=False)
            scores = z_users[i] @ z_items[items].T / np.sqrt(latent_dim)
            noise = rng.standard_normal(ratings_per_user) * noise_std
            ratings = np.clip(2.5 + 1.0 * scores + noise, 0.0, 5.0)
            for k, (j, y) in enumerate(zip(items, ratings)):
                position += 1
                records.append(RatingRecord(
                    user_id=f"u{i}", item_id=f"d{d}_i{j}",
                    rating=float(y), timestamp=k, position=position))
        domains.append(make_domain(records))
    return domains[0], domains[1]


def write_tsv(domain: DomainData, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in domain.records:
            fh.write(f"{r.user_id}\t{r.item_id}\t{r.rating:.6f}\t{r.timestamp}\n")
