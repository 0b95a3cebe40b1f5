"""A fixed, versioned dictionary of bounded-Lipschitz test functions.

Each function has ‖f‖_∞ + Lip(f) <= 1, so the largest |∫f d(μ - ν)| over
the dictionary is a lower estimate of the bounded-Lipschitz distance.

Two shapes are used, with scale L = 1/(1 + B):

* radial   f(x) = L clip(|x - c| - ρ, -B, B)
* planar   f(x) = L clip(e·x - t, -B, B)

The first few entries are fixed by hand (centred radial bumps and the
coordinate ramps); the rest come from a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._hot import dictionary_integrate

DICTIONARY_VERSION = 1
_SEED = 20240601


@dataclass(frozen=True)
class LipschitzDictionary:
    d: int
    kind: np.ndarray  # 0 radial, 1 planar
    centers: np.ndarray  # radial centres or plane normals
    offsets: np.ndarray  # ρ or t
    clips: np.ndarray  # B
    version: int = DICTIONARY_VERSION

    def __len__(self):
        return len(self.kind)

    def evaluate(self, x) -> np.ndarray:
        """Values of every test function at points x: shape (len, m)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.d == 1 and x.shape[-1] != 1:
            x = x.reshape(-1, 1)
        out = np.empty((len(self), x.shape[0]))
        rad = self.kind == 0
        if rad.any():
            r = np.linalg.norm(x[None, :, :] - self.centers[rad][:, None, :], axis=2)
            out[rad] = r - self.offsets[rad][:, None]
        if (~rad).any():
            out[~rad] = self.centers[~rad] @ x.T - self.offsets[~rad][:, None]
        B = self.clips[:, None]
        return np.clip(out, -B, B) / (1.0 + B)

    def with_cones(self, centers, B: float = 1.0) -> "LipschitzDictionary":
        """Append radial entries with ρ = 0 (cones min(|x - a|, B)/(1 + B)) at ``centers``."""
        c = np.asarray(centers, dtype=float).reshape(-1, self.d)
        k = c.shape[0]
        return LipschitzDictionary(self.d, np.concatenate([self.kind, np.zeros(k, int)]),
                                   np.vstack([self.centers, c]), np.concatenate([self.offsets, np.zeros(k)]),
                                   np.concatenate([self.clips, np.full(k, float(B))]), self.version)

    def integrate(self, x, weights, backend=None) -> np.ndarray:
        """∫ f dν for ν = Σ w_k δ_{x_k}, for every f."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.d == 1 and x.shape[-1] != 1:
            x = x.reshape(-1, 1)
        w = np.broadcast_to(np.asarray(weights, dtype=float), (x.shape[0],))
        return dictionary_integrate(self.kind, self.centers, self.offsets, self.clips, x, w, backend)


def lipschitz_dictionary(d: int, size: int = 200, scale: float = 1.0) -> LipschitzDictionary:
    """The fixed dictionary for dimension d; ``scale`` stretches centres and offsets
    (the functions stay 1-Lipschitz)."""
    rng = np.random.default_rng([_SEED, d, size])
    kind, centers, offsets, clips = [], [], [], []
    # hand-fixed entries
    for rho, B in ((0.5, 0.5), (0.25, 0.25), (1.0, 1.0)):
        kind.append(0)
        centers.append(np.zeros(d))
        offsets.append(rho * scale)
        clips.append(B * scale)
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        kind.append(1)
        centers.append(e)
        offsets.append(0.0)
        clips.append(1.0 * scale)
    while len(kind) < size:
        if rng.uniform() < 0.5:
            kind.append(0)
            c = rng.uniform(-1.2, 1.2, size=d) * scale
            centers.append(c)
            offsets.append(rng.uniform(0.0, 1.0) * scale)
        else:
            kind.append(1)
            e = rng.normal(size=d)
            e /= np.linalg.norm(e)
            centers.append(e)
            offsets.append(rng.uniform(-1.0, 1.0) * scale)
        clips.append(rng.uniform(0.05, 1.0) * scale)
    return LipschitzDictionary(d, np.array(kind), np.array(centers, dtype=float),
                               np.array(offsets, dtype=float), np.array(clips, dtype=float))


def bl_distance(dic: LipschitzDictionary, x, wx, y, wy) -> float:
    """max_f |∫f dν_x - ∫f dν_y| over the dictionary."""
    return float(np.max(np.abs(dic.integrate(x, wx) - dic.integrate(y, wy))))


def radial_test(center, rho: float, B: float):
    """One standalone radial test function (for direct checks)."""
    c = np.asarray(center, dtype=float)

    def f(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.clip(np.linalg.norm(x - c, axis=1) - rho, -B, B) / (1.0 + B)

    return f


__all__ = ["LipschitzDictionary", "lipschitz_dictionary", "bl_distance", "radial_test", "DICTIONARY_VERSION"]
