"""File formats: JSON encodings for graphs/specs/chains, CSV time series,
and the stable spec hash used in provenance records.

Conventions: complex numbers are written as [re, im] pairs; matrices are
row-major lists of such pairs; every spec/chain file carries a header noting
the site-tensor leg convention (columns index the virtual product basis over
sorted neighbors, row-major).
"""

import csv
import hashlib
import json
import os
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ValidationError
from .graphs import Graph, make_graph
from .mps import MpsChain
from .tensors import BondBasis, PepsSpec, SiteTensor, make_bond_basis

LEG_NOTE = ("site tensor columns index the virtual product basis over "
            "sorted neighbors, row-major")


def encode_matrix(m):
    m = np.atleast_2d(np.asarray(m))
    return {"shape": list(m.shape),
            "data": [[[float(np.real(x)), float(np.imag(x))] for x in row]
                     for row in m]}


def decode_matrix(obj):
    data = np.array([[complex(re, im) for re, im in row] for row in obj["data"]])
    if list(data.shape) != list(obj["shape"]):
        raise ValidationError(f"matrix data does not match shape {obj['shape']}")
    if np.all(data.imag == 0):
        data = data.real
    return data


def encode_vector(v):
    return [[float(np.real(x)), float(np.imag(x))] for x in np.asarray(v)]


def decode_vector(obj):
    v = np.array([complex(re, im) for re, im in obj])
    return v.real if np.all(v.imag == 0) else v


def graph_to_json(graph):
    return {"n": graph.num_vertices, "edges": [list(e) for e in graph.edges]}


def graph_from_json(obj):
    try:
        n, edges = obj["n"], obj["edges"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"graph JSON needs keys 'n' and 'edges': {exc}")
    return make_graph(int(n), [tuple(e) for e in edges])


def spec_to_json(spec):
    return {
        "format": "tensor-network-spec",
        "version": __version__,
        "leg_order_convention": LEG_NOTE,
        "graph": graph_to_json(spec.graph),
        "bond_dim": spec.bond_dim,
        "bond_phi0": encode_vector(spec.bond_basis.phi0),
        "tensors": [{"vertex": t.vertex,
                     "leg_order": list(t.leg_order),
                     "matrix": encode_matrix(t.matrix)}
                    for t in spec.tensors],
    }


def spec_from_json(obj):
    graph = graph_from_json(obj["graph"])
    D = int(obj["bond_dim"])
    phi0 = decode_vector(obj["bond_phi0"])
    default_bell = np.zeros(D * D)
    default_bell[:: D + 1] = 1 / np.sqrt(D)
    if np.allclose(phi0, default_bell, atol=1e-14):
        basis = make_bond_basis(D)
    else:
        basis = make_bond_basis(D, phi0=phi0)
    by_vertex = {}
    for t in obj["tensors"]:
        by_vertex[int(t["vertex"])] = SiteTensor(
            int(t["vertex"]), decode_matrix(t["matrix"]), D,
            tuple(int(x) for x in t["leg_order"]))
    missing = set(range(graph.num_vertices)) - set(by_vertex)
    if missing:
        raise ValidationError(f"spec JSON is missing tensors for vertices {sorted(missing)}")
    return PepsSpec(graph, tuple(by_vertex[v] for v in range(graph.num_vertices)), basis)


def chain_to_json(chain):
    return {"format": "mps-chain",
            "version": __version__,
            "boundary": chain.boundary,
            "matrices": [encode_matrix(A) for A in chain.matrices]}


def chain_from_json(obj):
    return MpsChain(tuple(decode_matrix(m) for m in obj["matrices"]),
                    boundary=obj.get("boundary", "periodic"))


def _canonical(obj):
    """Deterministic JSON for hashing: sorted keys, repr-exact floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def spec_hash(spec):
    """Short stable digest of a spec's full contents (tensors + graph + bond)."""
    payload = spec_to_json(spec)
    payload.pop("version", None)
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()[:16]


def write_series_csv(path, series, sidecar=None):
    """CSV with header t,fidelity,energy,violation; meta goes to a JSON
    sidecar at <path>.meta.json (series meta merged with `sidecar`)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "fidelity", "energy", "violation"])
        for row in zip(series.times, series.fidelity, series.energy,
                       series.violation):
            w.writerow([repr(float(x)) for x in row])
    meta = {"version": __version__}
    meta.update(series.meta)
    meta.update(sidecar or {})
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_series_csv(path):
    from .dynamics import TimeSeries

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "fidelity", "energy", "violation"]:
        raise ValidationError(f"{path} is not a series CSV")
    cols = np.array([[float(x) for x in row] for row in rows[1:]])
    meta = {}
    sidecar = str(path) + ".meta.json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
    return TimeSeries(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], meta)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):   # before int: bool subclasses int
        return bool(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_result_json(path, payload, timestamp=True):
    """Deterministic result file: sorted keys, version stamped; the timestamp
    is the only field allowed to differ between identical runs."""
    out = dict(payload)
    out.setdefault("version", __version__)
    if timestamp:
        out["timestamp"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w") as fh:
        json.dump(_jsonable(out), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
