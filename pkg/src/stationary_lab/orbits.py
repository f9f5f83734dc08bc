"""Finite orbits of rational torus points and their block structure in T^d x Z"""

import logging
from collections import deque
from fractions import Fraction
from typing import Dict, FrozenSet, List, Tuple, Union

import networkx as nx
import numpy as np

from .core_model import TorusPoint, WalkConfig, apply_exact_rational
from .empirical import EmpiricalMeasure
from .exceptions import PreconditionError

logger = logging.getLogger(__name__)

BlockVertex = Tuple[TorusPoint, int]


def _point_key(p: TorusPoint) -> Tuple[Fraction, ...]:
    return tuple(p.coords)


def _require_exact(x: TorusPoint, cfg: WalkConfig) -> None:
    if not x.exact:
        raise PreconditionError("Orbits need an exact rational point")
    if x.dim != cfg.dim:
        raise PreconditionError(f"Point has dimension {x.dim}, model has {cfg.dim}")


def orbit_graph(x: TorusPoint, cfg: WalkConfig) -> nx.MultiDiGraph:
    """
    Breadth-first closure of x under the configured generators.

    Nodes are exact points; each generator contributes an edge y -> g y
    keyed by its index and carrying its chi value and probability.
    """
    _require_exact(x, cfg)
    q = x.denominator
    bound = q ** cfg.dim
    graph = nx.MultiDiGraph()
    graph.add_node(x, order=0)
    queue = deque([x])
    while queue:
        y = queue.popleft()
        for i, g in enumerate(cfg.generators):
            image = TorusPoint(apply_exact_rational(g.entries, y.coords), exact=True)
            if image not in graph:
                graph.add_node(image, order=graph.number_of_nodes())
                queue.append(image)
            graph.add_edge(y, image, key=i, chi=g.chi, prob=cfg.probs[i])
        if graph.number_of_nodes() > bound:
            raise PreconditionError(f"Orbit exceeded the bound q^d = {bound}; denominators were not preserved")
    logger.debug(f"Orbit of {x.pairs()} has {graph.number_of_nodes()} points")
    return graph


def rational_orbit(x: TorusPoint, cfg: WalkConfig) -> List[TorusPoint]:
    """
    Orbit of a rational point under the semigroup generated by cfg.

    Args:
        x: Exact point with common denominator q
        cfg: Walk configuration

    Returns:
        Orbit points in breadth-first order (at most q^d of them)
    """
    graph = orbit_graph(x, cfg)
    return sorted(graph.nodes, key=lambda p: graph.nodes[p]["order"])


def block_orbit_components(x: TorusPoint, cfg: WalkConfig, m: int) -> List[FrozenSet[BlockVertex]]:
    """
    Strongly connected components of (y, k) -> (g y, k + chi(g) mod m) on
    orbit x Z/mZ.

    Args:
        x: Exact start point
        cfg: Walk configuration with integer chi
        m: Modulus (>= 1)

    Returns:
        Components as vertex sets; the one containing (x, 0) comes first
    """
    if m < 1:
        raise PreconditionError(f"m must be at least 1, got {m}")
    if not cfg.integer_chi:
        raise PreconditionError("Block components need integer chi values")
    orbit = orbit_graph(x, cfg)
    blocks = nx.DiGraph()
    for y in orbit.nodes:
        for k in range(m):
            blocks.add_node((y, k))
    for y, image, data in orbit.edges(data=True):
        for k in range(m):
            blocks.add_edge((y, k), (image, (k + int(data["chi"])) % m))
    components = [frozenset(c) for c in nx.strongly_connected_components(blocks)]

    def order(c: FrozenSet[BlockVertex]):
        return min((orbit.nodes[y]["order"], k) for y, k in c)

    components.sort(key=order)
    logger.info(f"Block components of {x.pairs()} mod {m}: sizes {[len(c) for c in components]}")
    return components


def uniform_orbit_measure(orbit: List[TorusPoint]) -> EmpiricalMeasure:
    """Equal weights 1/|orbit| on the orbit points, at t = 0."""
    if not orbit:
        raise PreconditionError("Orbit must be nonempty")
    weight = Fraction(1, len(orbit))
    x = np.array([p.as_array() for p in orbit])
    return EmpiricalMeasure(x, np.zeros(len(orbit)), np.full(len(orbit), float(weight)),
                            exact_points=tuple(orbit), exact_weights=tuple(weight for _ in orbit))


def stationarity_residual(measure: Union[EmpiricalMeasure, List[TorusPoint]], cfg: WalkConfig) -> Fraction:
    """
    max_y |(mu * nu)(y) - nu(y)| for a measure on finitely many exact points,
    computed in exact arithmetic (probabilities are read as exact binary fractions).
    """
    if not isinstance(measure, EmpiricalMeasure):
        measure = uniform_orbit_measure(measure)
    if measure.exact_points is None:
        raise PreconditionError("Exact stationarity needs a measure on exact points")
    before: Dict[Tuple[Fraction, ...], Fraction] = {}
    for p, w in zip(measure.exact_points, measure.exact_weights):
        before[_point_key(p)] = before.get(_point_key(p), Fraction(0)) + w
    after: Dict[Tuple[Fraction, ...], Fraction] = {}
    for key, w in before.items():
        for prob, g in zip(cfg.probs, cfg.generators):
            image = apply_exact_rational(g.entries, key)
            after[image] = after.get(image, Fraction(0)) + Fraction(prob) * w
    keys = set(before) | set(after)
    residual = max(abs(after.get(k, Fraction(0)) - before.get(k, Fraction(0))) for k in keys)
    logger.info(f"Stationarity residual over {len(keys)} points: {residual}")
    return residual
