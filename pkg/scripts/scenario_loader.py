#!/usr/bin/env python3
"""
Scenario loader for holab.

Reads a scenario JSON file, validates it against config/schema.json (when
jsonschema is installed), overlays its ``parameters`` on
config/defaults/parameters.json and builds the numerical objects the
commands work on: the complex, the cover with one superconnection per
chart, transitions, paths and 2-simplices.

Paths and simplices are written in global coordinates and attached to a
chart; they are stored in that chart's local coordinates.
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import jsonschema
    HAS_JSONSCHEMA = True
except ImportError:
    HAS_JSONSCHEMA = False

from bundle2 import Cover, DifferentialCocycle, PlacedChart, frame_cocycle
from crossed_module import CrossedModuleContext
from forms import (
    Chart,
    EndValuedForm,
    PolynomialField,
    Superconnection,
    gauge_flat,
    gauge_transform,
    random_gauge,
    shift_superconnection,
    unipotent_field,
)
from graded_core import CochainComplex, StructuralError
from holonomy import NumericParameters, resolve_threads
from simplex import PathSegment, PLPath, Simplex2

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).resolve().parent.parent
DEFAULTS_DIR = ROOT_DIR / "config" / "defaults"
SCHEMA_PATH = ROOT_DIR / "config" / "schema.json"
SCENARIOS_DIR = ROOT_DIR / "config" / "scenarios"
SCHEMA_VERSION = "1.0"

NUMERIC_KEYS = ("steps_per_unit", "s_steps", "quadrature_nodes", "series_order", "series_panels", "threads")


class ScenarioError(ValueError):
    """Parse, schema or reference error; carries the offending field path."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None,
                 column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


def _field_path(parts: Sequence[Any]) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


# -- files and parameters -----------------------------------------------------------

def load_json_file(file_path: Path) -> Dict[str, Any]:
    try:
        text = Path(file_path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"Scenario file not found: {file_path}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Invalid JSON in {file_path}: {e.msg}", line=e.lineno, column=e.colno)


def load_schema(schema_path: Path = SCHEMA_PATH) -> Dict[str, Any]:
    return load_json_file(schema_path)


def validate_schema(data: Dict[str, Any], schema: Optional[Dict[str, Any]] = None) -> None:
    """Raise ScenarioError for the first schema violation (by document order)."""
    if not HAS_JSONSCHEMA:
        logger.warning("jsonschema not available, skipping schema validation")
        return
    schema = schema if schema is not None else load_schema()
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        first = errors[0]
        raise ScenarioError(f"Schema violation: {first.message}", _field_path(list(first.absolute_path)))


def merge_parameters(defaults: Dict[str, Any], overlay: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Overlay key by key; nested ``tolerances`` are merged rather than replaced."""
    merged = copy.deepcopy(defaults)
    for key, value in (overlay or {}).items():
        if key == "tolerances":
            merged.setdefault("tolerances", {}).update(value)
            logger.debug(f"Scenario overrides tolerances: {sorted(value)}")
        else:
            merged[key] = value
            logger.debug(f"Scenario overrides {key} = {value}")
    return merged


def load_parameters(defaults_dir: Path = DEFAULTS_DIR, overlay: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    defaults = load_json_file(defaults_dir / "parameters.json")
    return merge_parameters(defaults, overlay)


# -- the scenario object -----------------------------------------------------------------

@dataclass(frozen=True)
class PlacedPath:
    chart: str
    path: PLPath


@dataclass(frozen=True)
class PlacedSimplex:
    chart: str
    simplex: Simplex2


@dataclass
class Scenario:
    id: str
    description: str
    seed: int
    parameters: Dict[str, Any]
    complex: CochainComplex
    cover: Cover
    superconnections: Dict[str, Superconnection]
    transitions: Dict[Tuple[str, str], Tuple[PolynomialField, PolynomialField]]
    paths: Dict[str, PlacedPath] = field(default_factory=dict)
    cover_paths: Dict[str, List[Tuple[str, PLPath]]] = field(default_factory=dict)
    simplices: Dict[str, PlacedSimplex] = field(default_factory=dict)
    simplex_pairs: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    source: Optional[Path] = None

    @cached_property
    def context(self) -> CrossedModuleContext:
        return CrossedModuleContext(self.complex, self.tolerances["exactness"])

    @property
    def tolerances(self) -> Dict[str, float]:
        return self.parameters["tolerances"]

    @property
    def numeric(self) -> NumericParameters:
        values = {key: int(self.parameters[key]) for key in NUMERIC_KEYS if key in self.parameters}
        values["threads"] = resolve_threads(values.get("threads", 4))
        return NumericParameters(**values)

    @property
    def samples(self) -> int:
        return int(self.parameters.get("samples", 50))

    def rng(self, *salt: int) -> np.random.Generator:
        return np.random.default_rng([int(self.seed), *salt])

    @cached_property
    def frame(self) -> DifferentialCocycle:
        """Differential cocycle of the local systems; GaugeRelationError if transitions disagree."""
        return frame_cocycle(self.cover, self.superconnections,
                             {key: g for key, (g, _) in self.transitions.items()},
                             self.samples, self.tolerances["comparison"], self.tolerances["flatness"])

    def object_kind(self, object_id: str) -> str:
        for kind, table in (("path", self.paths), ("simplex", self.simplices), ("cover_path", self.cover_paths)):
            if object_id in table:
                return kind
        known = sorted(list(self.paths) + list(self.simplices) + list(self.cover_paths))
        raise ScenarioError(f"Unknown object '{object_id}' (known: {', '.join(known) or 'none'})", "object")


# -- builders ---------------------------------------------------------------------------

def _required(entry: Any, key: str, where: str) -> Any:
    """entry[key]; a missing field is a ScenarioError even when no schema check ran."""
    path = f"{where}.{key}" if where else key
    if not isinstance(entry, dict):
        raise ScenarioError(f"Expected an object with field '{key}'", where or key)
    if key not in entry:
        raise ScenarioError(f"missing field '{key}'", path)
    return entry[key]


def _matrix(value: Any, shape: Tuple[int, int], where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ScenarioError(f"Matrix has shape {arr.shape}, expected {shape}", where)
    return arr


def build_complex(entry: Dict[str, Any]) -> CochainComplex:
    dims = {int(k): int(v) for k, v in _required(entry, "dims", "complex").items()}
    blocks = {}
    for key, block in entry.get("differential", {}).items():
        k = int(key)
        if k not in dims or k + 1 not in dims:
            raise ScenarioError(f"Differential block from degree {k} has no target", f"complex.differential.{key}")
        blocks[k] = _matrix(block, (dims[k + 1], dims[k]), f"complex.differential.{key}")
    try:
        return CochainComplex.from_blocks(dims, blocks)
    except StructuralError as e:
        raise ScenarioError(str(e), "complex")


def _polynomial_matrix(entries: Any, nvars: int, n: int, where: str) -> PolynomialField:
    """A square matrix whose entries are numbers or ``{"i,j": c}`` tables."""
    if len(entries) != n or any(len(row) != n for row in entries):
        raise ScenarioError(f"Expected a {n}x{n} matrix", where)
    try:
        rows = [[PolynomialField.from_table(nvars, e) if isinstance(e, dict)
                 else PolynomialField.constant(nvars, float(e)) for e in row] for row in entries]
    except StructuralError as e:
        raise ScenarioError(str(e), where)
    return PolynomialField.from_entries(nvars, rows)


def build_form(entry: Optional[Dict[str, Any]], complex_: CochainComplex, nvars: int,
               form_degree: int, inner_degree: int, where: str) -> EndValuedForm:
    """``{"0,1": matrix, ...}``: one matrix per strictly increasing index string."""
    n = complex_.total_dim
    components = {}
    for key, entries in (entry or {}).items():
        index = tuple(int(p) for p in str(key).split(",") if p.strip() != "")
        components[index] = _polynomial_matrix(entries, nvars, n, f"{where}.{key}")
    try:
        return EndValuedForm(complex_.space, nvars, form_degree, inner_degree, components)
    except StructuralError as e:
        raise ScenarioError(str(e), where)


def build_transition(entry: Dict[str, Any], complex_: CochainComplex, nvars: int,
                     rng: np.random.Generator, where: str) -> Tuple[PolynomialField, PolynomialField]:
    n = complex_.total_dim
    kind = _required(entry, "kind", where)
    if kind == "identity":
        one = PolynomialField.constant(nvars, np.eye(n))
        return one, one
    if kind == "constant":
        space = complex_.space
        dense = np.eye(n)
        for key, block in entry.get("blocks", {}).items():
            k = int(key)
            if k not in space.degrees:
                raise ScenarioError(f"No degree {k} in the complex", f"{where}.blocks.{key}")
            s = space.slice(k)
            dense[s, s] = _matrix(block, (space.dim(k), space.dim(k)), f"{where}.blocks.{key}")
        try:
            inverse = np.linalg.inv(dense)
        except np.linalg.LinAlgError:
            raise ScenarioError("Constant transition is singular", where)
        if complex_.chain_map_residual(dense) > 1e-10 * (1.0 + np.linalg.norm(dense)):
            raise ScenarioError("Constant transition is not a chain map", where)
        return PolynomialField.constant(nvars, dense), PolynomialField.constant(nvars, inverse)
    if kind == "unipotent":
        return unipotent_field(complex_, nvars, rng, int(entry.get("factors", 2)),
                               int(entry.get("degree", 1)), float(entry.get("scale", 0.4)))
    raise ScenarioError(f"Unknown transition kind '{kind}'", f"{where}.kind")


def _local_path(path: PLPath, placed: PlacedChart, where: str) -> PLPath:
    local = path.shifted(-placed.offset)
    if not placed.chart.contains(local.sample()):
        raise ScenarioError(f"Path leaves chart '{placed.id}'", where)
    return local


def build_path(entry: Dict[str, Any], where: str) -> PLPath:
    try:
        if "points" in entry:
            return PLPath.through(entry["points"])
        return PLPath([PathSegment.from_coefficients(c) for c in _required(entry, "segments", where)])
    except StructuralError as e:
        raise ScenarioError(str(e), where)


def _shift_simplex(sigma: Simplex2, offset: np.ndarray) -> Simplex2:
    return Simplex2(sigma.field - PolynomialField.constant(2, offset), sigma.kind)


def build_simplex(entry: Dict[str, Any], dim: int, built: Dict[str, Simplex2], where: str) -> Simplex2:
    """Global-coordinate simplex of one of the four kinds."""
    kind = _required(entry, "kind", where)
    try:
        if kind == "affine":
            v0, v1, v2 = _required(entry, "vertices", where)
            return Simplex2.affine(v0, v1, v2)
        if kind == "polynomial":
            tables = _required(entry, "components", where)
            if len(tables) != dim:
                raise ScenarioError(f"Polynomial simplex needs {dim} component tables", f"{where}.components")
            field_ = PolynomialField.zero(2, (dim,))
            for k, table in enumerate(tables):
                field_ = field_ + PolynomialField.from_table(2, table).tensor(np.eye(dim)[k])
            return Simplex2(field_, "polynomial")
        if kind == "degenerate":
            a, b = _required(entry, "points", where)
            return Simplex2.degenerate(PathSegment.line(a, b))
        if kind == "reparametrized":
            base = _required(entry, "of", where)
            if base not in built:
                raise ScenarioError(f"Reparametrized simplex must reference an earlier simplex, got '{base}'",
                                    f"{where}.of")
            return built[base].reparametrized(float(entry.get("strength", 0.5)))
    except StructuralError as e:
        raise ScenarioError(str(e), where)
    raise ScenarioError(f"Unknown simplex kind '{kind}'", f"{where}.kind")


class _SuperconnectionBuilder:
    """Resolves chart superconnections, following gauge_transform references."""

    def __init__(self, data: Dict[str, Any], complex_: CochainComplex, cover: Cover,
                 transitions: Dict[Tuple[str, str], Tuple[PolynomialField, PolynomialField]],
                 transition_ids: Dict[str, Tuple[str, str]], seed: int):
        self.complex = complex_
        self.cover = cover
        self.transitions = transitions
        self.transition_ids = transition_ids
        self.seed = seed
        self.specs = {c["id"]: (i, c) for i, c in enumerate(data["charts"])}
        self.built: Dict[str, Superconnection] = {}
        self.pending: List[str] = []

    def get(self, chart_id: str) -> Superconnection:
        if chart_id in self.built:
            return self.built[chart_id]
        if chart_id in self.pending:
            cycle = " -> ".join(self.pending + [chart_id])
            raise ScenarioError(f"Cyclic gauge_transform references: {cycle}", "charts")
        self.pending.append(chart_id)
        S = self._build(chart_id)
        self.pending.pop()
        self.built[chart_id] = S
        return S

    def _build(self, chart_id: str) -> Superconnection:
        index, chart_spec = self.specs[chart_id]
        where = f"charts[{index}].superconnection"
        entry = chart_spec.get("superconnection", {"kind": "explicit"})
        placed = self.cover.chart(chart_id)
        chart = placed.chart
        kind = _required(entry, "kind", where)
        if kind == "explicit":
            S = Superconnection(
                chart, self.complex,
                build_form(entry.get("omega1"), self.complex, chart.dim, 1, 0, f"{where}.omega1"),
                build_form(entry.get("omega2"), self.complex, chart.dim, 2, -1, f"{where}.omega2"),
                build_form(entry["omega3"], self.complex, chart.dim, 3, -2, f"{where}.omega3")
                if "omega3" in entry else None,
            )
        elif kind == "gauge_flat":
            rng = np.random.default_rng(entry.get("seed", [self.seed, 1, index]))
            gauge = random_gauge(self.complex, chart.dim, rng,
                                 factors=int(entry.get("factors", 2)),
                                 degree=int(entry.get("degree", 1)),
                                 phi1_degree=int(entry.get("phi1_degree", 1)),
                                 phi1_scale=float(entry.get("phi1_scale", 0.2)),
                                 with_phi1=bool(entry.get("phi1", True)))
            try:
                S = gauge_flat(chart, self.complex, gauge.phi0, gauge.phi1, gauge.phi0_inv)
            except ValueError as e:
                raise ScenarioError(str(e), where)
        elif kind == "gauge_transform":
            S = self._transformed(chart_id, entry, where)
        else:
            raise ScenarioError(f"Unknown superconnection kind '{kind}'", f"{where}.kind")

        perturbation = entry.get("perturbation")
        if perturbation:
            S = S.with_forms(
                S.omega1 + build_form(perturbation.get("omega1"), self.complex, chart.dim, 1, 0,
                                      f"{where}.perturbation.omega1"),
                S.omega2 + build_form(perturbation.get("omega2"), self.complex, chart.dim, 2, -1,
                                      f"{where}.perturbation.omega2"),
            )
            logger.debug(f"Chart '{chart_id}' carries a perturbation")
        return S

    def _transformed(self, chart_id: str, entry: Dict[str, Any], where: str) -> Superconnection:
        """S_j = g S_i g^{-1} + g d(g^{-1}) for the declared transition i → j, in chart j coordinates."""
        source_id = _required(entry, "source", where)
        if source_id not in self.specs:
            raise ScenarioError(f"Unknown source chart '{source_id}'", f"{where}.source")
        transition_id = _required(entry, "transition", where)
        if transition_id not in self.transition_ids:
            raise ScenarioError(f"Unknown transition '{transition_id}'", f"{where}.transition")
        pair = self.transition_ids[transition_id]
        if pair == (source_id, chart_id):
            g, g_inv = self.transitions[pair]
        elif pair == (chart_id, source_id):
            g_inv, g = self.transitions[pair]
        else:
            raise ScenarioError(f"Transition '{transition_id}' does not connect '{source_id}' and '{chart_id}'",
                                f"{where}.transition")
        source = self.get(source_id)
        placed = self.cover.chart(chart_id)
        delta = placed.offset - self.cover.chart(source_id).offset
        moved = shift_superconnection(source, delta, placed.chart)
        try:
            return gauge_transform(moved, g.shift(placed.offset), g_inv.shift(placed.offset), placed.chart)
        except ValueError as e:
            raise ScenarioError(str(e), where)


def build_scenario(data: Dict[str, Any], defaults_dir: Path = DEFAULTS_DIR,
                   source: Optional[Path] = None) -> Scenario:
    """Reference-check and build a scenario from parsed (schema-valid) JSON."""
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"Unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})",
                            "schema_version")
    parameters = load_parameters(defaults_dir, data.get("parameters"))
    seed = int(data.get("seed", 0))
    complex_ = build_complex(_required(data, "complex", ""))

    chart_specs = data.get("charts", [])
    if not chart_specs:
        raise ScenarioError("no charts", "charts")
    placed = []
    for i, entry in enumerate(chart_specs):
        where = f"charts[{i}]"
        box = _required(entry, "box", where)
        try:
            chart = Chart(len(box), tuple(tuple(axis) for axis in box))
            offset = np.asarray(entry.get("offset", [0.0] * len(box)))
            placed.append(PlacedChart(_required(entry, "id", where), chart, offset))
        except StructuralError as e:
            raise ScenarioError(str(e), where)
    try:
        cover = Cover(placed)
    except StructuralError as e:
        raise ScenarioError(str(e), "charts")

    transitions: Dict[Tuple[str, str], Tuple[PolynomialField, PolynomialField]] = {}
    transition_ids: Dict[str, Tuple[str, str]] = {}
    for i, entry in enumerate(data.get("transitions", [])):
        where = f"transitions[{i}]"
        pair = (_required(entry, "from", where), _required(entry, "to", where))
        for key, chart_id in zip(("from", "to"), pair):
            if chart_id not in cover.charts:
                raise ScenarioError(f"Unknown chart '{chart_id}'", f"{where}.{key}")
        if pair[0] == pair[1] or pair in transitions or pair[::-1] in transitions:
            raise ScenarioError(f"Duplicate or trivial transition {pair[0]} -> {pair[1]}", where)
        if cover.overlap_box(pair) is None:
            raise ScenarioError(f"Charts '{pair[0]}' and '{pair[1]}' do not overlap", where)
        rng = np.random.default_rng(entry.get("seed", [seed, 2, i]))
        transitions[pair] = build_transition(entry, complex_, cover.dim, rng, where)
        transition_ids[entry.get("id", f"{pair[0]}->{pair[1]}")] = pair

    builder = _SuperconnectionBuilder(data, complex_, cover, transitions, transition_ids, seed)
    superconnections = {chart_id: builder.get(chart_id) for chart_id in cover.ids}

    def chart_of(entry: Dict[str, Any], where: str) -> PlacedChart:
        chart_id = entry.get("chart", cover.ids[0])
        if chart_id not in cover.charts:
            raise ScenarioError(f"Unknown chart '{chart_id}'", f"{where}.chart")
        return cover.chart(chart_id)

    paths = {}
    for i, entry in enumerate(data.get("paths", [])):
        where = f"paths[{i}]"
        home = chart_of(entry, where)
        paths[_required(entry, "id", where)] = PlacedPath(home.id, _local_path(build_path(entry, where), home, where))

    cover_paths = {}
    for i, entry in enumerate(data.get("cover_paths", [])):
        legs = []
        for j, leg in enumerate(_required(entry, "legs", f"cover_paths[{i}]")):
            where = f"cover_paths[{i}].legs[{j}]"
            home = chart_of(leg, where)
            path = build_path(leg, where)
            _local_path(path, home, where)
            legs.append((home.id, path))
        cover_paths[_required(entry, "id", f"cover_paths[{i}]")] = legs

    simplices: Dict[str, PlacedSimplex] = {}
    global_simplices: Dict[str, Simplex2] = {}
    for i, entry in enumerate(data.get("simplices", [])):
        where = f"simplices[{i}]"
        simplex_id = _required(entry, "id", where)
        home = chart_of(entry, where)
        sigma = build_simplex(entry, cover.dim, global_simplices, where)
        global_simplices[simplex_id] = sigma
        local = _shift_simplex(sigma, home.offset)
        if not local.inside(home.chart):
            raise ScenarioError(f"Simplex leaves chart '{home.id}'", where)
        simplices[simplex_id] = PlacedSimplex(home.id, local)

    pairs = {}
    for i, entry in enumerate(data.get("simplex_pairs", [])):
        where = f"simplex_pairs[{i}]"
        first, second = (_required(entry, key, where) for key in ("first", "second"))
        for key, simplex_id in (("first", first), ("second", second)):
            if simplex_id not in simplices:
                raise ScenarioError(f"Unknown simplex '{simplex_id}'", f"{where}.{key}")
        if simplices[first].chart != simplices[second].chart:
            raise ScenarioError("Simplex pair spans two charts", where)
        pairs[_required(entry, "id", where)] = (first, second)

    ids = [*paths, *cover_paths, *simplices]
    duplicates = sorted({x for x in ids if ids.count(x) > 1})
    if duplicates:
        raise ScenarioError(f"Duplicate object ids: {duplicates}", "")

    scenario = Scenario(data.get("id", source.stem if source else "scenario"), data.get("description", ""),
                        seed, parameters, complex_, cover, superconnections, transitions,
                        paths, cover_paths, simplices, pairs, source)
    logger.debug(f"Scenario '{scenario.id}': {len(cover.ids)} charts, {len(paths)} paths, "
                 f"{len(simplices)} simplices")
    return scenario


def load_scenario(path: Path, defaults_dir: Path = DEFAULTS_DIR,
                  schema: Optional[Dict[str, Any]] = None) -> Scenario:
    path = Path(path)
    data = load_json_file(path)
    validate_schema(data, schema)
    return build_scenario(data, defaults_dir, path)


def bundled_scenarios(scenarios_dir: Path = SCENARIOS_DIR) -> List[Path]:
    return sorted(scenarios_dir.glob("*.json"))
