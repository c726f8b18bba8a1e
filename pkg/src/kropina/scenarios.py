"""Scenario files: schema validation, builtins, and admissible sampling.

A scenario pins down one Kropina space together with a sampling plan:
chart box, point and direction counts, seed, weight constants, and
optional tolerance overrides.  Scenarios are plain JSON documents
validated against the packaged ``scenario/1`` schema, so a run is
reproducible from the file and the tool version alone.

Loading is strict on purpose.  Schema violations carry a JSON-pointer
path, expression problems keep the parser's offset message, and a
scenario whose admissible cone is (numerically) empty is rejected up
front rather than failing deep inside a curvature routine.
"""

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .einstein import WeightConfig, weight_preset
from .expr import ExprError, eval_expr, parse_expr
from .forms import KropinaSpace
from .riemann import metric_from_strings

SCENARIO_SCHEMA_ID = "scenario/1"

# Direction admissibility: the conic domain is {beta > 0}; sampled
# directions keep a small safety margin so order-4 jets stay accurate.
DEFAULT_CUTOFF = 1e-3
# Cross-validation between formula routes compares high-order jets, so
# the comparison sampler stays further from the cone boundary.
COMPARISON_CUTOFF = 0.05

_ADMISSIBILITY_FLOOR = 0.10


class ScenarioError(ValueError):
    """A scenario document that cannot be turned into a runnable space."""

    def __init__(self, message, pointer=""):
        suffix = f" (at {pointer})" if pointer else ""
        super().__init__(f"{message}{suffix}")
        self.pointer = pointer


def _load_schema(name):
    text = resources.files("kropina").joinpath(f"schemas/{name}").read_text()
    return json.loads(text)


_SCENARIO_VALIDATOR = None


def _scenario_validator():
    global _SCENARIO_VALIDATOR
    if _SCENARIO_VALIDATOR is None:
        _SCENARIO_VALIDATOR = Draft202012Validator(
            _load_schema("scenario-1.schema.json")
        )
    return _SCENARIO_VALIDATOR


def _error_pointer(err):
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        # jsonschema reports missing properties at the parent object;
        # pull the property name out of the message so the pointer
        # names the absent field itself.
        m = re.search(r"'([^']+)'", err.message)
        if m:
            parts.append(m.group(1))
    return "/" + "/".join(parts) if parts else "/"


def _schema_check(doc):
    err = best_match(_scenario_validator().iter_errors(doc))
    if err is not None:
        raise ScenarioError(err.message, _error_pointer(err))


def _coeff(value, pointer):
    """Weight constant from JSON: int stays exact, strings go through
    Fraction so '3/8' and '0.375' both mean the exact rational."""
    if isinstance(value, bool):
        raise ScenarioError("weight constants must be numbers", pointer)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(
            f"cannot read weight constant {value!r} as a rational", pointer
        ) from None


def _parse_checked(text, dim, pointer):
    try:
        return parse_expr(text, dim)
    except ExprError as e:
        raise ScenarioError(str(e), pointer) from None


@dataclass(frozen=True)
class Scenario:
    """One validated scenario document, ready to build spaces and samples."""

    name: str
    dimension: int
    representation: str
    metric: tuple  # tuple of tuples of component source strings
    vector: tuple  # wind W^i (nav) or drift b_i (ab) source strings
    gauge: str | None
    weight: str | None
    constants: dict
    box: tuple  # tuple of (lo, hi) pairs
    points: int
    directions: int
    seed: int
    tolerances: dict
    description: str = ""

    def space(self, check=False):
        rows = [list(r) for r in self.metric]
        m = metric_from_strings(rows, self.dimension)
        if self.representation == "nav":
            check_at = self.probe_points() if check else None
            return KropinaSpace.from_nav(
                m,
                list(self.vector),
                gauge=self.gauge,
                weight=self.weight,
                name=self.name,
                check_at=check_at,
            )
        return KropinaSpace.from_ab(
            m, list(self.vector), weight=self.weight, name=self.name
        )

    def config(self):
        c = self.constants
        if "preset" in c:
            return weight_preset(c["preset"], self.dimension, f=self.weight)
        return WeightConfig(
            _coeff(c["a"], "/constants/a"),
            _coeff(c["c"], "/constants/c"),
            self.dimension,
            f=self.weight,
        )

    def tolerance(self, key, default):
        return float(self.tolerances.get(key, default))

    def probe_points(self, count=3):
        """Deterministic chart points used for load-time validation."""
        box = np.asarray(self.box, dtype=float)
        rng = np.random.default_rng([self.seed, 0xAD0B17])
        pts = [0.5 * (box[:, 0] + box[:, 1])]
        for _ in range(max(0, count - 1)):
            pts.append(rng.uniform(box[:, 0], box[:, 1]))
        return [list(map(float, p)) for p in pts]

    def as_dict(self):
        doc = {
            "schema": SCENARIO_SCHEMA_ID,
            "name": self.name,
            "dimension": self.dimension,
            "representation": self.representation,
            "metric": [list(r) for r in self.metric],
            "vector": list(self.vector),
            "constants": dict(self.constants),
            "box": [list(pair) for pair in self.box],
            "points": self.points,
            "directions": self.directions,
            "seed": self.seed,
        }
        if self.gauge is not None:
            doc["gauge"] = self.gauge
        if self.weight is not None:
            doc["weight"] = self.weight
        if self.tolerances:
            doc["tolerances"] = dict(self.tolerances)
        if self.description:
            doc["description"] = self.description
        return doc


def _from_dict(doc, origin):
    _schema_check(doc)
    n = int(doc["dimension"])

    metric = doc["metric"]
    if len(metric) != n or any(len(row) != n for row in metric):
        raise ScenarioError(f"metric must be {n} x {n}", "/metric")
    for i, row in enumerate(metric):
        for j, entry in enumerate(row):
            _parse_checked(entry, n, f"/metric/{i}/{j}")
    for i in range(n):
        for j in range(i + 1, n):
            if metric[i][j] != metric[j][i]:
                raise ScenarioError(
                    "metric entries must match across the diagonal",
                    f"/metric/{i}/{j}",
                )

    vector = doc["vector"]
    if len(vector) != n:
        raise ScenarioError(f"vector needs {n} components", "/vector")
    for i, entry in enumerate(vector):
        _parse_checked(entry, n, f"/vector/{i}")

    gauge = doc.get("gauge")
    if gauge is not None:
        if doc["representation"] == "ab":
            raise ScenarioError(
                "the ab representation derives its gauge from the drift",
                "/gauge",
            )
        _parse_checked(gauge, n, "/gauge")

    weight = doc.get("weight")
    if weight is not None:
        _parse_checked(weight, n, "/weight")

    constants = dict(doc.get("constants", {"preset": "plain"}))
    box = doc.get("box", [[-0.5, 0.5]] * n)
    if len(box) != n:
        raise ScenarioError(f"box needs {n} intervals", "/box")
    for i, (lo, hi) in enumerate(box):
        if not (float(lo) < float(hi)):
            raise ScenarioError(
                "box interval needs positive volume", f"/box/{i}"
            )

    scenario = Scenario(
        name=doc["name"],
        dimension=n,
        representation=doc["representation"],
        metric=tuple(tuple(row) for row in metric),
        vector=tuple(vector),
        gauge=gauge,
        weight=weight,
        constants=constants,
        box=tuple((float(lo), float(hi)) for lo, hi in box),
        points=int(doc.get("points", 4)),
        directions=int(doc.get("directions", 12)),
        seed=int(doc.get("seed", 0)),
        tolerances=dict(doc.get("tolerances", {})),
        description=doc.get("description", ""),
    )

    # Resolve constants now so a bad preset fails at load, not mid-run.
    try:
        scenario.config()
    except ScenarioError:
        raise
    except ValueError as e:
        pointer = "/constants/preset" if "preset" in constants else "/constants"
        raise ScenarioError(str(e), pointer) from None

    try:
        space = scenario.space(check=True)
    except ScenarioError:
        raise
    except ExprError as e:
        raise ScenarioError(str(e), "/metric") from None
    except ValueError as e:
        # from_nav's unit-wind check, or a shape problem deeper down
        raise ScenarioError(f"{origin}: {e}", "/vector") from None

    rate = admissibility_rate(space, scenario.box, scenario.seed)
    if rate <= _ADMISSIBILITY_FLOOR:
        raise ScenarioError(
            f"admissible directions too rare: rate {rate:.3f} on the box "
            f"(needs > {_ADMISSIBILITY_FLOOR:.2f}); the drift is degenerate "
            "or the metric fails to evaluate on the chart"
        )
    return scenario


def load_scenario(source):
    """Scenario from a builtin name, 'random:<seed>', a path, or a dict."""
    if isinstance(source, Scenario):
        return source
    if isinstance(source, dict):
        return _from_dict(source, origin="<dict>")
    text = str(source)
    if text in _BUILTINS:
        return _from_dict(json.loads(json.dumps(_BUILTINS[text])), origin=text)
    if text.startswith("random:"):
        tail = text[len("random:"):]
        try:
            seed = int(tail)
        except ValueError:
            raise ScenarioError(
                f"random scenario wants an integer seed, got {tail!r}"
            ) from None
        return _from_dict(random_scenario(seed), origin=text)
    path = Path(text)
    if not path.exists():
        raise ScenarioError(
            f"no builtin scenario or file named {text!r}; "
            f"builtins: {', '.join(builtin_names())}"
        )
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON in {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path} does not hold a scenario object")
    return _from_dict(doc, origin=str(path))


# -- sampling -------------------------------------------------------------


def _matrix_at(space, x):
    env = [float(v) for v in x]
    n = space.dim
    h = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            h[i, j] = eval_expr(space.h.exprs[i][j], env)
    return h


def _wind_at(space, x):
    env = [float(v) for v in x]
    return np.array([eval_expr(e, env) for e in space.w], dtype=float)


def admissibility_rate(space, box, seed, points=3, draws=64):
    """Fraction of isotropic random directions with positive drift pairing.

    Evaluation failures at a probe point count the whole point as
    inadmissible; a metric that cannot be evaluated on its own box is
    as unusable as an empty cone.
    """
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng([int(seed), 0xAD0B17])
    pts = [0.5 * (box[:, 0] + box[:, 1])]
    for _ in range(points - 1):
        pts.append(rng.uniform(box[:, 0], box[:, 1]))
    total = 0
    hits = 0
    for x in pts:
        total += draws
        try:
            h = _matrix_at(space, x)
            w_low = h @ _wind_at(space, x)
        except (ExprError, ArithmeticError):
            continue
        ys = rng.standard_normal((draws, space.dim))
        hits += int(np.sum(ys @ w_low > 0.0))
    return hits / total


def sample_directions(space, x, count, rng, cutoff=DEFAULT_CUTOFF):
    """Admissible directions at x: uniform on the h-unit sphere with the
    degenerate cone boundary rejected (W_0 above the cutoff)."""
    h = _matrix_at(space, x)
    w_low = h @ _wind_at(space, x)
    out = []
    tries = 0
    limit = 400 * count + 400
    while len(out) < count:
        tries += 1
        if tries > limit:
            raise ScenarioError(
                f"admissible directions too rare at {list(x)}: "
                f"{len(out)}/{count} after {tries} draws"
            )
        y = rng.standard_normal(space.dim)
        norm2 = float(y @ h @ y)
        if norm2 < 1e-16:
            continue
        y = y / np.sqrt(norm2)
        if float(w_low @ y) > cutoff:
            out.append(y)
    return out


def box_points(scenario, count, rng):
    box = np.asarray(scenario.box, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1], size=(count, scenario.dimension))


def scenario_samples(
    scenario,
    space=None,
    points=None,
    directions=None,
    seed=None,
    cutoff=DEFAULT_CUTOFF,
):
    """The seeded sampling plan: [(x, [y, ...]), ...].

    Deterministic for a fixed (scenario, seed); the scenario's own seed
    applies unless an override is given.
    """
    if space is None:
        space = scenario.space()
    rng = np.random.default_rng(scenario.seed if seed is None else int(seed))
    n_pts = scenario.points if points is None else int(points)
    n_dirs = scenario.directions if directions is None else int(directions)
    xs = box_points(scenario, n_pts, rng)
    return [
        (x, sample_directions(space, x, n_dirs, rng, cutoff=cutoff))
        for x in xs
    ]


# -- builtin scenarios ----------------------------------------------------

_EYE3 = [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]

_BUILTINS = {
    "euclid_parallel": {
        "schema": SCENARIO_SCHEMA_ID,
        "name": "euclid_parallel",
        "description": "constant wind on flat space; Einstein in every regime",
        "dimension": 3,
        "representation": "nav",
        "metric": _EYE3,
        "vector": ["1", "0", "0"],
        "constants": {"preset": "pric"},
        "box": [[-0.6, 0.6], [-0.6, 0.6], [-0.6, 0.6]],
        "points": 3,
        "directions": 10,
        "seed": 7,
    },
    "s3_hopf": {
        "schema": SCENARIO_SCHEMA_ID,
        "name": "s3_hopf",
        "description": "unit Killing wind on the round 3-sphere",
        "dimension": 3,
        "representation": "nav",
        "metric": [
            ["1", "0", "0"],
            ["0", "sin(x1)^2", "0"],
            ["0", "0", "cos(x1)^2"],
        ],
        "vector": ["0", "1", "1"],
        "constants": {"a": 1, "c": 0},
        "box": [[0.5, 0.9], [0.1, 0.5], [0.3, 0.7]],
        "points": 3,
        "directions": 10,
        "seed": 11,
    },
    "euclid_gaussian": {
        "schema": SCENARIO_SCHEMA_ID,
        "name": "euclid_gaussian",
        "description": "flat wind with a quadratic weight; weakly weighted Einstein",
        "dimension": 3,
        "representation": "nav",
        "metric": _EYE3,
        "vector": ["1", "0", "0"],
        "weight": "0.1*(x1^2 + x2^2 + x3^2)",
        "constants": {"a": 1, "c": 0},
        "box": [[-0.5, 0.5], [-0.5, 0.5], [-0.5, 0.5]],
        "points": 3,
        "directions": 10,
        "seed": 13,
    },
    "euclid_twist": {
        "schema": SCENARIO_SCHEMA_ID,
        "name": "euclid_twist",
        "description": "unit wind twisting with x2; fails the checkers by design",
        "dimension": 3,
        "representation": "nav",
        "metric": _EYE3,
        "vector": ["cos(0.5*x2)", "sin(0.5*x2)", "0"],
        "constants": {"preset": "ricInf"},
        "box": [[-0.6, 0.6], [-0.6, 0.6], [-0.6, 0.6]],
        "points": 3,
        "directions": 10,
        "seed": 17,
    },
    "torus_wind": {
        "schema": SCENARIO_SCHEMA_ID,
        "name": "torus_wind",
        "description": "periodic coefficients in the (alpha, beta) representation",
        "dimension": 3,
        "representation": "ab",
        "metric": [
            ["1.3 + 0.2*sin(x1)", "0.1*cos(x3)", "0"],
            ["0.1*cos(x3)", "1.1", "0"],
            ["0", "0", "1 + 0.1*cos(x2)"],
        ],
        "vector": ["1 + 0.2*sin(x2)", "0.3*cos(x1)", "0.2"],
        "weight": "0.1*sin(x1 + x2)",
        "constants": {"a": 1, "c": 0},
        "box": [[0.2, 1.2], [0.3, 1.1], [0.1, 0.9]],
        "points": 3,
        "directions": 10,
        "seed": 19,
    },
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin_summaries():
    """(name, dimension, representation, description) rows for listings."""
    rows = []
    for name in builtin_names():
        doc = _BUILTINS[name]
        rows.append(
            (name, doc["dimension"], doc["representation"],
             doc.get("description", ""))
        )
    return rows


def random_scenario(seed, dimension=3):
    """Seeded scenario with small polynomial coefficients, ab form.

    Perturbations stay well inside positive definiteness on the box, so
    every generated scenario is admissible; the same seed reproduces the
    same document byte for byte.
    """
    if dimension not in (2, 3, 4):
        raise ScenarioError("random scenarios support dimensions 2..4")
    n = dimension
    rng = np.random.default_rng([int(seed), 0x5EED])

    def coeff(scale):
        return format(float(rng.uniform(-scale, scale)), ".4f")

    metric = [["0"] * n for _ in range(n)]
    for i in range(n):
        j = (i + 1) % n
        metric[i][i] = (
            f"1 + {coeff(0.06)}*x{i + 1}^2 + {coeff(0.05)}*x{j + 1}"
        )
    for i in range(n):
        for j in range(i + 1, n):
            entry = f"{coeff(0.04)}*x{(j % n) + 1}"
            metric[i][j] = entry
            metric[j][i] = entry

    vector = [f"1 + {coeff(0.1)}*x{(i % n) + 1}" if i == 0
              else f"{coeff(0.15)} + {coeff(0.1)}*x{(i % n) + 1}"
              for i in range(n)]
    weight = f"{coeff(0.1)}*x1 + {coeff(0.08)}*x2^2"

    return {
        "schema": SCENARIO_SCHEMA_ID,
        "name": f"random_{int(seed)}",
        "description": "seeded polynomial-coefficient scenario",
        "dimension": n,
        "representation": "ab",
        "metric": metric,
        "vector": vector,
        "weight": weight,
        "constants": {"a": 1, "c": 0},
        "box": [[-0.35, 0.35]] * n,
        "points": 3,
        "directions": 8,
        "seed": int(seed),
    }
