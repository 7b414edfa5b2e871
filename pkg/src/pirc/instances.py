"""Seeded random problem instances for batch runs and property checks."""

from __future__ import annotations

import numpy as np

from .mrcdesign import FilterSpec, OfPlantSpec, SfPlantSpec, SpecError
from .polycore import Poly


def random_roots(rng: np.random.Generator, degree: int, re_range=(-3.0, -0.3),
                 im_max: float = 2.0) -> list[complex]:
    """Conjugate-closed root list; real parts drawn from ``re_range``."""
    out: list[complex] = []
    while len(out) < degree:
        re = rng.uniform(*re_range)
        if degree - len(out) >= 2 and rng.random() < 0.4:
            im = rng.uniform(0.1, im_max)
            out += [complex(re, im), complex(re, -im)]
        else:
            out.append(complex(re, 0.0))
    return out


def random_hurwitz(rng: np.random.Generator, degree: int, **kw) -> Poly:
    return Poly.from_roots(random_roots(rng, degree, **kw))


def random_poly(rng: np.random.Generator, degree: int, scale: float = 2.0) -> Poly:
    """Monic polynomial with roots anywhere in a box around the origin."""
    return Poly.from_roots(random_roots(rng, degree, re_range=(-scale, scale), im_max=scale))


def random_filter(rng: np.random.Generator, max_order: int = 4) -> FilterSpec:
    while True:
        nD = int(rng.integers(1, max_order + 1))
        nN = int(rng.integers(0, nD))
        D_f = random_hurwitz(rng, nD)
        N_f = Poly(rng.uniform(-2.0, 2.0, size=nN + 1))
        if N_f.degree != nN:
            continue
        try:
            return FilterSpec(N_f, D_f)
        except SpecError:
            continue


def random_sf_instance(rng: np.random.Generator, max_n: int = 6,
                       max_nxi: int = 4) -> tuple[SfPlantSpec, FilterSpec]:
    n = int(rng.integers(1, max_n + 1))
    a_m = random_hurwitz(rng, n).as_array()[:-1]
    a = random_poly(rng, n).as_array()[:-1]
    return SfPlantSpec(tuple(a), tuple(a_m)), random_filter(rng, max_nxi)


def random_of_plant(rng: np.random.Generator, max_n: int = 4,
                    minimum_phase: bool = True) -> OfPlantSpec:
    """Coprime monic (D, N) with Hurwitz D_m and lambda.

    ``minimum_phase`` draws Hurwitz N, the standing assumption that keeps the
    control signal of the ideal controller bounded.
    """
    while True:
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(0, n))
        D = random_poly(rng, n)
        N = random_hurwitz(rng, m) if minimum_phase else random_poly(rng, m)
        D_m = random_hurwitz(rng, n - m, re_range=(-3.0, -0.5))
        lam = random_hurwitz(rng, n - 1, re_range=(-3.0, -0.5))
        try:
            return OfPlantSpec(D, N, D_m, lam)
        except SpecError:
            continue
