"""Probabilities of histories: chains of projected properties.

A history starts from a density matrix and applies, for each event k, a
propagator U_k (evolution since the previous event) followed by a projector
E_k. Its probability is Tr[C rho C^dagger] with chain operator
C = E_n U_n ... E_1 U_1, which is the Heisenberg-picture trace formula with
E_k(t_k) = U(t_k)^dagger E_k U(t_k).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteFamily, InvalidProjector
from .hilbert import as_density, as_matrix, check_unitary, max_abs

PROJECTOR_TOL = 1e-10


def check_projector(e, tol: float = PROJECTOR_TOL) -> np.ndarray:
    e = as_matrix(e)
    if max_abs(e - e.conj().T) > tol or max_abs(e @ e - e) > tol:
        raise InvalidProjector("event operator is not a self-adjoint idempotent")
    return e


@dataclass(frozen=True, eq=False)
class History:
    initial: np.ndarray
    events: tuple = field(default=())  # (projector, propagator) pairs

    def __post_init__(self):
        rho = as_density(self.initial, tol=1e-10)
        events = []
        for e, u in self.events:
            e = check_projector(e)
            u = check_unitary(u)
            if e.shape != rho.shape or u.shape != rho.shape:
                raise InvalidProjector("event dimension does not match the initial state")
            events.append((e, u))
        object.__setattr__(self, "initial", rho)
        object.__setattr__(self, "events", tuple(events))

    def chain(self) -> np.ndarray:
        c = np.eye(self.initial.shape[0], dtype=complex)
        for e, u in self.events:
            c = e @ u @ c
        return c


def history_probability(h: History) -> float:
    c = h.chain()
    value = np.trace(c @ h.initial @ c.conj().T)
    if abs(value.imag) > 1e-12:
        raise ValueError(f"history probability has imaginary part {value.imag:.3e}")
    p = float(value.real)
    if p < -1e-10 or p > 1 + 1e-10:
        raise ValueError(f"history probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def check_family(family, dim: int, tol: float = 1e-10):
    family = [check_projector(e) for e in family]
    total = sum(family, np.zeros((dim, dim), dtype=complex))
    if max_abs(total - np.eye(dim)) > tol:
        raise IncompleteFamily("projectors in a family must sum to the identity")
    return family


def history_table(rho, propagators, families):
    """Probability of every history in the Cartesian product of the families.

    ``propagators[k]`` is applied before the k-th slot. Returns a list of
    (member index tuple, probability) in lexicographic order.
    """
    rho = as_density(rho, tol=1e-10)
    dim = rho.shape[0]
    if len(propagators) != len(families):
        raise ValueError("need one propagator per time slot")
    families = [check_family(f, dim) for f in families]
    rows = []
    for choice in itertools.product(*(range(len(f)) for f in families)):
        events = tuple((families[k][i], propagators[k]) for k, i in enumerate(choice))
        rows.append((choice, history_probability(History(rho, events))))
    return rows


def exhaustive_family_total(rho, propagators, families) -> float:
    """Sum of history probabilities over every combination of family members."""
    return float(sum(p for _, p in history_table(rho, propagators, families)))
