"""JSON case files and the binary reduced-model archive.

Geometry file::

    {"dim": 3,
     "patches": [{"degrees": [2, 2, 2],
                  "knots": ["0 0 0 1 1 1", ...],
                  "control": [[wx, wy, wz, w], ...]}],   # first direction innermost
     "boundary": {"inlet": [[0, "u0"]], ...},
     "maps": [{"C": ["0", "0", "0"], "G": [["mu1", "0", "0"], ...]}],
     "parameters": {"bounds": [[1, 5], ...], "mu_ref": [1, 1, 1]},
     "refine": {"degree": 2, "subdivisions": [[8, 6, 6], ...]},  # optional
     "glue_tol": 1e-10}

Problem file::

    {"coefficients": [[["mu1", "0", ...], ...], ...],      # (d+1)x(d+1) per patch
     "sources": [[{"value": "10", "ball": {"center": [0, 0, 0.5], "radius": 0.2}}], ...],
     "boundary_conditions": {"inlet": {"dirichlet": 0}, "outlet": {"neumann": 1}}}
"""
import io as _io
import json
import struct
import zipfile

import numpy as np

from .assembly import Ball, ProblemDefinition
from .geometry import AffineParamMap, GeometryError, ParameterDomain, glue_patches
from .nurbs import NurbsPatch, elevate_patch, h_refine_uniform
from .splines import KnotVector


class CaseFileError(ValueError):
    pass


def _require(obj, key, where):
    if key not in obj:
        raise CaseFileError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_knots(text, degree):
    if isinstance(text, str):
        vals = [float(t) for t in text.replace(",", " ").split()]
    else:
        vals = [float(t) for t in text]
    return KnotVector(vals, int(degree))


def format_knots(kv):
    return " ".join(repr(float(v)) if v != int(v) else str(int(v)) for v in kv.values)


def patch_from_json(obj, dim, where="patch"):
    degrees = _require(obj, "degrees", where)
    knots = _require(obj, "knots", where)
    if len(degrees) != len(knots):
        raise CaseFileError(f"{where}: {len(degrees)} degrees but {len(knots)} knot vectors")
    kvs = [parse_knots(t, p) for t, p in zip(knots, degrees)]
    rows = np.asarray(_require(obj, "control", where), dtype=float)
    shape = tuple(kv.n for kv in kvs)
    if rows.shape != (int(np.prod(shape)), dim + 1):
        raise CaseFileError(f"{where}: control array has shape {rows.shape}, expected "
                            f"({int(np.prod(shape))}, {dim + 1})")
    lattice = rows.reshape(shape[::-1] + (dim + 1,))
    lattice = np.moveaxis(lattice, range(len(shape)), range(len(shape))[::-1])
    return NurbsPatch(kvs, lattice)


def patch_to_json(patch):
    return {"degrees": list(patch.degrees),
            "knots": [format_knots(kv) for kv in patch.knots],
            "control": patch.flat(patch.projective).tolist()}


def load_json(source):
    if isinstance(source, dict):
        return source
    with open(source) as fh:
        return json.load(fh)


def load_geometry(source, level_subdivisions=None):
    """Build ``(MultipatchDomain, AffineParamMap, ParameterDomain)`` from a geometry file.

    ``level_subdivisions`` overrides the file's ``refine.subdivisions``.
    """
    g = load_json(source)
    dim = int(_require(g, "dim", "geometry"))
    try:
        patches = [patch_from_json(p, dim, f"patch {k}")
                   for k, p in enumerate(_require(g, "patches", "geometry"))]
    except (ValueError, TypeError) as exc:
        raise CaseFileError(f"geometry: {exc}") from exc
    refine = g.get("refine", {})
    subs = level_subdivisions if level_subdivisions is not None else refine.get("subdivisions")
    degree = refine.get("degree")
    out = []
    for k, p in enumerate(patches):
        if degree is not None:
            p = elevate_patch(p, degree)
        if subs is not None:
            s = subs[k] if np.ndim(subs) == 2 else subs
            p = h_refine_uniform(p, s)
        out.append(p)
    maps = _require(g, "maps", "geometry")
    if len(maps) != len(out):
        raise CaseFileError(f"geometry: {len(maps)} maps for {len(out)} patches")
    amap = AffineParamMap([m["C"] for m in maps], [m["G"] for m in maps])
    par = _require(g, "parameters", "geometry")
    pdom = ParameterDomain(_require(par, "bounds", "parameters"),
                           _require(par, "mu_ref", "parameters"))
    if amap.max_param() > pdom.P:
        raise CaseFileError(f"geometry maps use mu{amap.max_param()} but only "
                            f"{pdom.P} parameters are declared")
    tags = {name: [(int(k), f) for k, f in faces]
            for name, faces in g.get("boundary", {}).items()}
    domain = glue_patches(out, tol=float(g.get("glue_tol", 1e-10)), boundary_tags=tags)
    return domain, amap, pdom


def load_problem(source, n_patches=None, n_params=None):
    pr = load_json(source)
    coeffs = _require(pr, "coefficients", "problem")
    sources = []
    for k, lst in enumerate(pr.get("sources", [[] for _ in coeffs])):
        items = []
        for s in lst:
            ball = s.get("ball")
            spatial = Ball(tuple(ball["center"]), float(ball["radius"])) if ball else None
            items.append((s["value"], spatial))
        sources.append(items)
    bcs = {}
    for tag, spec in pr.get("boundary_conditions", {}).items():
        if len(spec) != 1:
            raise CaseFileError(f"problem: boundary condition on {tag!r} needs exactly "
                                "one of dirichlet/neumann")
        (kind, value), = spec.items()
        bcs[tag] = (kind, float(value))
    problem = ProblemDefinition(coeffs, sources, bcs)
    if n_patches is not None and len(problem.coefficients) != n_patches:
        raise CaseFileError(f"problem defines {len(problem.coefficients)} patches, "
                            f"geometry has {n_patches}")
    if n_params is not None:
        used = max([e.max_param() for a in problem.coefficients for r in a for e in r]
                   + [e.max_param() for src in problem.sources for e, _ in src] + [0])
        if used > n_params:
            raise CaseFileError(f"problem uses mu{used} but only {n_params} parameters "
                                "are declared")
    return problem


def check_tags(domain, problem):
    """Boundary-condition tags must exist and sit on boundary (non-interface) faces."""
    inner = domain.interface_faces()
    for tag in problem.boundary_conditions:
        if tag not in domain.boundary_tags:
            raise GeometryError(f"boundary condition on unknown tag {tag!r}")
        for kf in domain.boundary_tags[tag]:
            if kf in inner:
                raise GeometryError(f"tag {tag!r} refers to interface face {kf}")


# -- archive ------------------------------------------------------------------------

MAGIC = b"RBIGAMAT"
_ZIP_DATE = (2000, 1, 1, 0, 0, 0)


def pack_arrays(arrays):
    """Binary layout: magic, u32 count, then per array u16 name length, name,
    u8 ndim, ndim x u64 shape, float64 little-endian C-order data."""
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8", order="C")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def unpack_arrays(data):
    if data[:8] != MAGIC:
        raise CaseFileError("not a matrix blob (bad magic)")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + ln].decode()
        pos += ln
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return out


def write_archive(path, metadata, arrays, history):
    """Deterministic zip: fixed timestamps, sorted JSON keys."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, payload in (("metadata.json", json.dumps(metadata, sort_keys=True, indent=1)),
                              ("history.json", json.dumps(history, sort_keys=True, indent=1)),
                              ("matrices.bin", pack_arrays(arrays))):
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload if isinstance(payload, bytes) else payload.encode())


def read_archive(path):
    with zipfile.ZipFile(path) as zf:
        metadata = json.loads(zf.read("metadata.json"))
        history = json.loads(zf.read("history.json"))
        arrays = unpack_arrays(zf.read("matrices.bin"))
    return metadata, arrays, history
