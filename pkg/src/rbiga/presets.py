"""Built-in cases: pipeline, cylinder, torus demo and a 2-D quarter annulus.

Every preset is produced as the same geometry/problem dictionaries that the
JSON loaders read, so presets and user files share one code path.
"""
import numpy as np

from .nurbs import NurbsPatch
from .io import patch_to_json
from .splines import KnotVector

S2 = np.sqrt(2.0) / 2.0
QUAD = "0 0 0 1 1 1"


def _patch(points, weights):
    """Quadratic single-element patch from lattices ``points[i, j, (k)]``."""
    points = np.asarray(points, dtype=float)
    kvs = [KnotVector.uniform(2, 1)] * (points.ndim - 1)
    return NurbsPatch.from_points(kvs, points, np.asarray(weights, dtype=float))


def _extrude(points2, weights2, z):
    """Tensor a 2-D quadratic lattice with a linear-in-z quadratic direction."""
    n1, n2, _ = points2.shape
    pts = np.zeros((n1, n2, len(z), 3))
    pts[..., :2] = points2[:, :, None, :]
    pts[..., 2] = np.asarray(z)[None, None, :]
    return pts, np.repeat(weights2[:, :, None], len(z), axis=2)


def _const_matrix(diag):
    n = len(diag)
    return [[str(diag[i]) if i == j else "0" for j in range(n)] for i in range(n)]


def _identity_map(dim):
    return {"C": ["0"] * dim, "G": _const_matrix(["1"] * dim)}


def _geometry_dict(patches, boundary, maps, bounds, mu_ref, subdivisions, degree=2):
    return {"dim": patches[0].dim,
            "patches": [patch_to_json(p) for p in patches],
            "boundary": {k: [list(f) for f in v] for k, v in boundary.items()},
            "maps": maps,
            "parameters": {"bounds": bounds, "mu_ref": mu_ref},
            "refine": {"degree": degree, "subdivisions": subdivisions},
            "glue_tol": 1e-10}


# -- pipeline -------------------------------------------------------------------

PIPE_LENGTH = 4.0
BEND_RADIUS = 1.0
PIPE_WIDTH = 1.0


def _straight(start, direction, across, length):
    """Box patch: u along ``direction``, v across (outer to inner), w along z."""
    start, direction, across = (np.asarray(a, dtype=float) for a in (start, direction, across))
    pts = np.zeros((3, 3, 3, 3))
    for i, s in enumerate((0.0, 0.5, 1.0)):
        for j, t in enumerate((0.0, 0.5, 1.0)):
            for k, z in enumerate((0.0, 0.5, 1.0)):
                xy = start + s * length * direction + t * PIPE_WIDTH * across
                pts[i, j, k] = (xy[0], xy[1], z * PIPE_WIDTH)
    return _patch(pts, np.ones((3, 3, 3)))


def _bend(center, angles):
    """Quarter-annulus bend; u follows the arc, v from outer to inner radius."""
    a0, a1 = angles
    cx, cy = center
    pts = np.zeros((3, 3, 3, 3))
    wts = np.ones((3, 3, 3))
    radii = (BEND_RADIUS + PIPE_WIDTH / 2, BEND_RADIUS, BEND_RADIUS - PIPE_WIDTH / 2)
    d0 = np.array([np.cos(a0), np.sin(a0)])
    d1 = np.array([np.cos(a1), np.sin(a1)])
    for j, rho in enumerate(radii):
        arc = [rho * d0, rho * (d0 + d1), rho * d1]
        for i, xy in enumerate(arc):
            for k, z in enumerate((0.0, 0.5, 1.0)):
                pts[i, j, k] = (cx + xy[0], cy + xy[1], z * PIPE_WIDTH)
                wts[i, j, k] = S2 if i == 1 else 1.0
    return _patch(pts, wts)


def pipeline_patches():
    L, r, h = PIPE_LENGTH, BEND_RADIUS, PIPE_WIDTH / 2
    y0 = -h
    return [
        _straight((0.0, y0), (1, 0), (0, 1), L),
        _bend((L, r), (-np.pi / 2, 0.0)),
        _straight((L + r + h, r), (0, 1), (-1, 0), L),
        _bend((L, r + L), (0.0, np.pi / 2)),
        _straight((L, r + L + r + h), (-1, 0), (0, -1), L),
    ]


def pipeline_subdivisions(level):
    axial, cross = 4 * 2 ** level, 3 * 2 ** level
    return [axial, cross, cross]


def pipeline(level=1):
    """U-shaped pipe of five patches with conductivities mu1, mu2, mu3 on the straights.

    Level 0, 1, 2 give about 650, 2900 and 16900 DOFs.
    """
    patches = pipeline_patches()
    faces = [f for f in ("v0", "v1", "w0", "w1")]
    boundary = {"inlet": [(0, "u0")], "outlet": [(4, "u1")],
                "curve": [(k, f) for k in range(5) for f in faces]}
    geometry = _geometry_dict(patches, boundary, [_identity_map(3)] * 5,
                              [[1.0, 5.0]] * 3, [1.0, 1.0, 1.0],
                              pipeline_subdivisions(level))
    cond = ["mu1", "1", "mu2", "1", "mu3"]
    problem = {"coefficients": [_const_matrix([c, c, c, "0"]) for c in cond],
               "sources": [[] for _ in cond],
               "boundary_conditions": {"inlet": {"dirichlet": 0}, "outlet": {"neumann": 1},
                                       "curve": {"neumann": 0}}}
    return geometry, problem


# -- cylinder -----------------------------------------------------------------------

CYL_RADIUS = 2.0
CYL_HEIGHT = 1.0


def quarter_disk(radius):
    """Quarter disk as a non-degenerate 3x3 quadratic patch.

    Two straight radii (v0 from the centre along +x, u0 along +y) and two
    45 degree arcs meeting at the diagonal corner.
    """
    t = np.tan(np.pi / 8)
    c = np.cos(np.pi / 8)
    R = radius
    pts = np.zeros((3, 3, 2))
    wts = np.ones((3, 3))
    # lattice index [i, j]: i along v0 edge (x axis), j along u0 edge (y axis)
    pts[0, 0] = (0, 0)
    pts[1, 0] = (R / 2, 0)
    pts[2, 0] = (R, 0)
    pts[0, 1] = (0, R / 2)
    pts[0, 2] = (0, R)
    pts[2, 1] = (R, R * t)
    wts[2, 1] = c
    pts[2, 2] = (R * S2, R * S2)
    pts[1, 2] = (R * t, R)
    wts[1, 2] = c
    pts[1, 1] = (0.55 * R, 0.55 * R)
    return pts, wts


def _rotate(points, angle):
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    out = points @ rot.T
    out[np.abs(out) < 1e-15] = 0.0
    return out


def cylinder_patches():
    pts2, wts2 = quarter_disk(CYL_RADIUS)
    patches = []
    for q in range(4):
        p, w = _extrude(_rotate(pts2, q * np.pi / 2), wts2, (0.0, CYL_HEIGHT / 2, CYL_HEIGHT))
        patches.append(_patch(p, w))
    return patches


def cylinder_subdivisions(level):
    s = 3 * 2 ** level
    return [s, s, 2 * 2 ** level]


def cylinder(level=1):
    """Cylinder of radius 2 and height 1 with independent y-scalings of its halves.

    The quarters in y > 0 scale by ``diag(1, mu1, mu3)``, those in y < 0 by
    ``diag(1, mu2, mu3)``. Level 1 gives about 1350 DOFs.
    """
    patches = cylinder_patches()
    boundary = {"curve": [(k, f) for k in range(4) for f in ("u1", "v1")],
                "top": [(k, "w1") for k in range(4)],
                "bottom": [(k, "w0") for k in range(4)]}
    upper = {"C": ["0", "0", "0"], "G": _const_matrix(["1", "mu1", "mu3"])}
    lower = {"C": ["0", "0", "0"], "G": _const_matrix(["1", "mu2", "mu3"])}
    maps = [upper, upper, lower, lower]
    geometry = _geometry_dict(patches, boundary, maps, [[1.0, 5.0]] * 3, [1.0, 1.0, 1.0],
                              cylinder_subdivisions(level))
    ball = {"center": [0.0, 0.0, CYL_HEIGHT / 2], "radius": 0.2}
    problem = {"coefficients": [_const_matrix(["1", "1", "1", "0"])] * 4,
               "sources": [[{"value": "10", "ball": ball}] for _ in range(4)],
               "boundary_conditions": {"curve": {"dirichlet": 0}, "top": {"neumann": 1},
                                       "bottom": {"neumann": 1}}}
    return geometry, problem


# -- torus demo ---------------------------------------------------------------------

TORUS_MAJOR = 3.0
TORUS_MINOR = 1.0


def nine_point_disk(radius):
    """Disk as a 3x3 quadratic patch; the four net corners lie on the circle."""
    r = radius
    pts = np.zeros((3, 3, 2))
    wts = np.ones((3, 3))
    for i, s in enumerate((-1, 0, 1)):
        for j, t in enumerate((-1, 0, 1)):
            if s and t:
                pts[i, j] = (s * r * S2, t * r * S2)
            elif s or t:
                pts[i, j] = (s * r * np.sqrt(2.0), t * r * np.sqrt(2.0))
                wts[i, j] = S2
    return pts, wts


def torus_patches():
    disk, dw = nine_point_disk(TORUS_MINOR)
    rev_w = np.array([1.0, S2, 1.0])
    patches = []
    for q in range(4):
        a0 = q * np.pi / 2
        d0 = np.array([np.cos(a0), np.sin(a0)])
        d1 = np.array([np.cos(a0 + np.pi / 2), np.sin(a0 + np.pi / 2)])
        dirs = [d0, d0 + d1, d1]
        pts = np.zeros((3, 3, 3, 3))
        wts = np.zeros((3, 3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    rho = TORUS_MAJOR + disk[j, k, 0]
                    xy = rho * dirs[i]
                    pts[i, j, k] = (xy[0], xy[1], disk[j, k, 1])
                    wts[i, j, k] = rev_w[i] * dw[j, k]
        pts[np.abs(pts) < 1e-15] = 0.0
        patches.append(_patch(pts, wts))
    return patches


def torus(level=0):
    """Torus of four quarter-revolution patches, x-scaled by ``G = diag(mu1, 1, 1)``."""
    patches = torus_patches()
    n = 2 ** level
    boundary = {"wall": [(k, f) for k in range(4) for f in ("v0", "v1", "w0", "w1")]}
    amap = {"C": ["0", "0", "0"], "G": _const_matrix(["mu1", "1", "1"])}
    geometry = _geometry_dict(patches, boundary, [amap] * 4, [[1.0, 2.0]], [1.0],
                              [2 * n, 2 * n, 2 * n])
    problem = {"coefficients": [_const_matrix(["1", "1", "1", "0"])] * 4,
               "sources": [[{"value": "1"}] for _ in range(4)],
               "boundary_conditions": {"wall": {"dirichlet": 0}}}
    return geometry, problem


# -- quarter annulus (2-D) -----------------------------------------------------------

def quarter_circle():
    """Unit quarter circle as a quadratic NURBS curve (control net and weights)."""
    return KnotVector.uniform(2, 1), np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), \
        np.array([1.0, S2, 1.0])


def quarter_annulus(level=2):
    """Quarter annulus ``1 <= r <= 2`` in the first quadrant, scaled by ``diag(mu1, mu2)``."""
    _, ctrl, w = quarter_circle()
    pts = np.stack([ctrl * 1.0, ctrl * 2.0], axis=1)
    wts = np.stack([w, w], axis=1)
    patch = NurbsPatch.from_points([KnotVector.uniform(2, 1), KnotVector.uniform(1, 1)],
                                   pts, wts)
    n = 2 ** level
    boundary = {"inner": [(0, "v0")], "outer": [(0, "v1")],
                "sides": [(0, "u0"), (0, "u1")]}
    amap = {"C": ["0", "0"], "G": _const_matrix(["mu1", "mu2"])}
    geometry = _geometry_dict([patch], boundary, [amap], [[0.5, 2.0], [0.5, 2.0]], [1.0, 1.0],
                              [n, n])
    problem = {"coefficients": [_const_matrix(["1", "1", "0"])],
               "sources": [[{"value": "1"}]],
               "boundary_conditions": {"inner": {"dirichlet": 0}, "outer": {"dirichlet": 0},
                                       "sides": {"neumann": 0}}}
    return geometry, problem


PRESETS = {"pipeline": pipeline, "cylinder": cylinder, "torus": torus,
           "annulus": quarter_annulus}


def get_preset(name, level=None):
    try:
        fn = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return fn() if level is None else fn(level)
