"""Reaction network domain types.

A network is an ordered list of species together with a list of reactions
``c_in -> c_out`` carrying positive mass-action rate constants.  Complexes are
stored as dense integer tuples indexed like ``Network.species``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class NetworkError(ValueError):
    """Raised when a network violates one of its structural invariants."""


@dataclass(frozen=True)
class Complex:
    """Nonnegative integer combination of species (all zeros is the empty complex)."""

    coefficients: tuple[int, ...]

    def __post_init__(self):
        coeffs = tuple(int(c) for c in self.coefficients)
        if any(c < 0 for c in coeffs):
            raise NetworkError(f"negative stoichiometry in complex {coeffs}")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int], d: int) -> "Complex":
        coeffs = [0] * d
        for idx, count in mapping.items():
            if not 0 <= idx < d:
                raise NetworkError(f"species index {idx} out of range for d={d}")
            coeffs[idx] += int(count)
        return cls(tuple(coeffs))

    @property
    def is_empty(self) -> bool:
        return not any(self.coefficients)

    @property
    def order(self) -> int:
        """Molecularity ``||c||_1``."""
        return sum(self.coefficients)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.coefficients) if c)

    def as_array(self) -> np.ndarray:
        return np.array(self.coefficients, dtype=np.int64)

    def __len__(self):
        return len(self.coefficients)


@dataclass(frozen=True)
class Reaction:
    input: Complex
    output: Complex
    rate_constant: float

    def __post_init__(self):
        rate = float(self.rate_constant)
        if not (rate > 0 and np.isfinite(rate)):
            raise NetworkError(f"rate constant must be positive and finite, got {self.rate_constant!r}")
        if len(self.input) != len(self.output):
            raise NetworkError("input and output complexes have different dimensions")
        if self.input == self.output:
            raise NetworkError("reaction input equals output (no-op reaction)")
        object.__setattr__(self, "rate_constant", rate)

    @property
    def vector(self) -> np.ndarray:
        return self.output.as_array() - self.input.as_array()


@dataclass(frozen=True)
class Network:
    """Immutable reaction network ``(S, C, R)``.

    The cached array views (``inputs``, ``outputs``, ``vectors``, ``rates``)
    are shared read-only arrays; do not mutate them.
    """

    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(str(s) for s in self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if len(set(self.species)) != len(self.species):
            raise NetworkError(f"duplicate species names in {self.species}")
        if not self.reactions:
            raise NetworkError("a network needs at least one reaction")
        d = len(self.species)
        for r in self.reactions:
            if len(r.input) != d or len(r.output) != d:
                raise NetworkError(f"reaction complex dimension does not match d={d}")

    @classmethod
    def from_arrays(
        cls,
        species: Sequence[str],
        inputs: Iterable[Sequence[int]],
        outputs: Iterable[Sequence[int]],
        rates: Iterable[float],
    ) -> "Network":
        reactions = tuple(
            Reaction(Complex(tuple(ci)), Complex(tuple(co)), k)
            for ci, co, k in zip(inputs, outputs, rates, strict=True)
        )
        return cls(tuple(species), reactions)

    def with_rates(self, rates: Sequence[float]) -> "Network":
        return Network(
            self.species,
            tuple(Reaction(r.input, r.output, k) for r, k in zip(self.reactions, rates, strict=True)),
        )

    @property
    def d(self) -> int:
        return len(self.species)

    @property
    def m(self) -> int:
        return len(self.reactions)

    def _frozen(self, key, build):
        arr = self._cache.get(key)
        if arr is None:
            arr = build()
            arr.setflags(write=False)
            self._cache[key] = arr
        return arr

    @property
    def inputs(self) -> np.ndarray:
        """``(m, d)`` integer matrix of input complexes."""
        return self._frozen("inputs", lambda: np.array(
            [r.input.coefficients for r in self.reactions], dtype=np.int64).reshape(self.m, self.d))

    @property
    def outputs(self) -> np.ndarray:
        return self._frozen("outputs", lambda: np.array(
            [r.output.coefficients for r in self.reactions], dtype=np.int64).reshape(self.m, self.d))

    @property
    def vectors(self) -> np.ndarray:
        """``(m, d)`` reaction vectors ``c_out - c_in``."""
        return self._frozen("vectors", lambda: self.outputs - self.inputs)

    @property
    def rates(self) -> np.ndarray:
        return self._frozen("rates", lambda: np.array([r.rate_constant for r in self.reactions], dtype=float))

    @cached_property
    def complexes(self) -> tuple[Complex, ...]:
        """Distinct complexes in first-appearance order."""
        seen: dict[Complex, None] = {}
        for r in self.reactions:
            seen.setdefault(r.input, None)
            seen.setdefault(r.output, None)
        return tuple(seen)

    @cached_property
    def input_complexes(self) -> tuple[Complex, ...]:
        seen: dict[Complex, None] = {}
        for r in self.reactions:
            seen.setdefault(r.input, None)
        return tuple(seen)

    def index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def vector_from_mapping(self, values: Mapping[str, float], dtype=float) -> np.ndarray:
        """Dense vector from ``{species: value}``; unnamed species default to 0."""
        out = np.zeros(self.d, dtype=dtype)
        for name, val in values.items():
            out[self.index(name)] = val
        return out

    def __hash__(self):
        return hash((self.species, self.reactions))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.species == other.species and self.reactions == other.reactions


@dataclass(frozen=True)
class CountState:
    """Molecule counts ``N`` in a reactor of volume ``v``; ``X = N / v``."""

    volume: float
    counts: tuple[int, ...]

    def __post_init__(self):
        if not self.volume > 0:
            raise NetworkError(f"volume must be positive, got {self.volume}")
        counts = tuple(int(n) for n in self.counts)
        if any(n < 0 for n in counts):
            raise NetworkError(f"negative molecule count in {counts}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "volume", float(self.volume))

    @classmethod
    def from_concentration(cls, x, volume: float) -> "CountState":
        """Round ``volume * x`` to the nearest lattice point."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise NetworkError("concentration must be nonnegative")
        return cls(volume, tuple(int(n) for n in np.rint(volume * x)))

    @property
    def concentration(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.volume

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def reaction_vector(r: Reaction) -> np.ndarray:
    """Jump direction ``c_out - c_in`` of a reaction."""
    return r.vector
